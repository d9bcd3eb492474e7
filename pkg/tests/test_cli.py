import json

import numpy as np
import pytest

from scenemotion.bundle import save_bundle
from scenemotion.cli import main
from scenemotion.dataio import ENGINE_RATE, Emotion, Waveform, read_manifest, save_audio
from scenemotion.pipeline import summary_text, write_outputs
from scenemotion.synthetic import tone_clip


@pytest.fixture(scope="module")
def bundle(trained, tmp_path_factory):
    path = tmp_path_factory.mktemp("bundle") / "model.afe"
    save_bundle(path, trained.model)
    return path


def _ini(tmp_path, manifest, extra=""):
    p = tmp_path / "run.ini"
    p.write_text(f"[run]\nseed = 3\n[paths]\nmanifest = {manifest}\nout_dir = {tmp_path / 'out'}\n{extra}")
    return p


class TestExitCodes:
    def test_missing_seed(self, capsys):
        assert main(["synth", "--tones"]) == 2
        assert "seed" in capsys.readouterr().err

    def test_missing_bundle_flag(self):
        assert main(["report", "--seed", "1"]) == 2

    def test_corrupt_bundle(self, tmp_path, capsys):
        p = tmp_path / "bad.afe"
        p.write_bytes(b"NOPE" + bytes(20))
        assert main(["report", "--bundle", str(p)]) == 3
        assert "magic" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path):
        assert main(["train", str(tmp_path / "none.tsv"), "--seed", "1", "--out", str(tmp_path)]) == 3

    def test_training_failure(self, tone_corpus, tmp_path, capsys):
        ini = _ini(tmp_path, tone_corpus, "[filters]\nvariance = 0.99\n")
        assert main(["train", "--config", str(ini)]) == 4
        assert "relax the thresholds" in capsys.readouterr().err


class TestCommands:
    def test_synth_tones(self, tmp_path, capsys):
        ini = _ini(tmp_path, "x", "[synth]\nper_class = 2\n")
        assert main(["synth", "--tones", "--config", str(ini)]) == 0
        manifest = capsys.readouterr().out.strip()
        assert len(read_manifest(manifest)) == 6

    def test_predict_seventy_seconds(self, bundle, tmp_path, capsys):
        rng = np.random.default_rng(0)
        parts = [tone_clip(Emotion(i % 3), rng).samples for i in range(10)]
        wav = tmp_path / "long.wav"
        save_audio(wav, Waveform(np.concatenate(parts), ENGINE_RATE))
        assert main(["predict", str(wav), "--bundle", str(bundle)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 11
        assert lines[-1].startswith("summary")
        labels = [ln.split("\t")[1] for ln in lines[:-1]]
        assert labels == [Emotion(i % 3).tag for i in range(10)]

    def test_predict_too_short(self, bundle, tmp_path):
        wav = tmp_path / "short.wav"
        save_audio(wav, tone_clip(Emotion.GOOD, np.random.default_rng(0), seconds=3.0))
        assert main(["predict", str(wav), "--bundle", str(bundle)]) == 3

    def test_evaluate_json(self, bundle, tone_corpus, capsys):
        assert main(["evaluate", str(tone_corpus), "--bundle", str(bundle), "--json"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["accuracy"] >= 0.9
        assert np.sum(rep["confusion_matrix"]) == 90

    def test_report(self, bundle, capsys):
        assert main(["report", "--bundle", str(bundle)]) == 0
        out = capsys.readouterr().out
        assert out.count("svm-") == 9 and "cnn-e300" in out
        assert "input width 45" in out


class TestOutputs:
    def test_written_files(self, trained, base_config, tmp_path):
        paths = write_outputs(trained, base_config, tmp_path)
        for key in ("bundle", "report", "kfold", "nested", "selection", "json"):
            assert (tmp_path / paths[key].split("/")[-1]).exists()
        assert len(list((tmp_path / "curves").glob("*.tsv"))) == 6
        machine = json.loads((tmp_path / "report.json").read_text())
        assert machine["bundle_sha256"] == paths["bundle_sha256"]
        assert "Accuracy" in summary_text(trained)

    def test_ledgers(self, trained):
        assert len(trained.kfold_ledger.rounds) == 4
        assert len(trained.nested_ledger.rounds) == 5
        assert trained.kfold_ledger.rounds[0].n_fits == 64 * 5

    def test_balanced(self, trained):
        assert len(set(trained.balance.after.values())) == 1

    def test_timings_cover_stages(self, trained):
        assert {"partition", "preprocess", "select", "balance", "svm-kfold", "svm-nested", "bpnn", "cnn", "meta",
                "evaluate"} <= set(trained.timings)
