from pathlib import Path

import numpy as np
import pytest

from scenemotion.config import load_config, stage_seed
from scenemotion.dataio import ENGINE_RATE, Emotion, ManifestEntry, Waveform, load_audio, read_manifest, save_audio, \
    write_manifest
from scenemotion.errors import ConfigError, DataError
from scenemotion.synthetic import canonical_category, fuse_corpus, tone_clip

DEFAULT_INI = Path(__file__).resolve().parents[1] / "configs" / "default.ini"


class TestConfig:
    def test_default_file(self):
        cfg = load_config(DEFAULT_INI)
        assert cfg.seed == 7
        assert cfg.thresholds.chi2_k == 60
        assert cfg.search.first_grid == (0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0)
        assert cfg.nn.stop_epochs == (140, 200, 300)
        assert cfg.path(cfg.manifest) == DEFAULT_INI.parent / "../out/corpus/manifest.tsv"

    def test_seed_override(self):
        assert load_config(DEFAULT_INI, seed=12).seed == 12

    def test_seed_required(self):
        with pytest.raises(ConfigError, match="seed"):
            load_config(None)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_bad_value(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[run]\nseed = 1\n[filters]\nspearman = 2\n")
        with pytest.raises(ConfigError, match="spearman"):
            load_config(p)

    def test_unparsable_number(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[run]\nseed = x\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_exit_code(self):
        assert ConfigError("x").exit_code == 2
        assert DataError("x").exit_code == 3

    def test_stage_seed(self):
        assert stage_seed(7, "cnn") == stage_seed(7, "cnn")
        assert stage_seed(7, "cnn") != stage_seed(7, "bpnn")
        assert stage_seed(7, "cnn") != stage_seed(8, "cnn")
        assert 0 <= stage_seed(123, "x") < 2**63


class TestToneCorpus:
    def test_files_and_manifest(self, tone_corpus):
        entries = read_manifest(tone_corpus)
        assert len(entries) == 90
        assert sorted({e.label for e in entries}) == ["bad", "good", "neutral"]
        w = load_audio(tone_corpus.parent / entries[0].path)
        assert w.samples.size == 7 * ENGINE_RATE

    def test_nearest_centroid_separable(self, tone_features):
        X, y = tone_features.X, tone_features.y
        Z = (X - X.mean(0)) / (X.std(0) + 1e-12)
        cents = np.stack([Z[y == c].mean(0) for c in range(3)])
        pred = np.argmin(((Z[:, None] - cents) ** 2).sum(-1), axis=1)
        assert np.mean(pred == y) == 1.0

    def test_seeded(self):
        a = tone_clip(Emotion.GOOD, np.random.default_rng(1)).samples
        b = tone_clip(Emotion.GOOD, np.random.default_rng(1)).samples
        np.testing.assert_array_equal(a, b)
        assert np.max(np.abs(a)) <= 1.0


def _sources(root: Path, speech_seconds=8.0, drop=()):
    """Tiny music/speech manifests built from tone clips."""
    rng = np.random.default_rng(0)
    root.mkdir(parents=True, exist_ok=True)
    music, speech = [], []
    for cat in ("happy", "angry"):
        for i in range(3):
            name = f"m_{cat}_{i}.wav"
            save_audio(root / name, tone_clip(Emotion.GOOD, rng, seconds=9.0))
            music.append(ManifestEntry(name, cat, "m"))
    for cat in ("relax", "surprise", "neutral", "sad", "fear"):
        if cat in drop:
            continue
        for i in range(2):
            name = f"s_{cat}_{i}.wav"
            save_audio(root / name, Waveform(0.1 * rng.standard_normal(int(speech_seconds * ENGINE_RATE)),
                                             ENGINE_RATE))
            speech.append(ManifestEntry(name, cat, "s"))
    write_manifest(root / "music.tsv", music)
    write_manifest(root / "speech.tsv", speech)
    return root / "music.tsv", root / "speech.tsv"


class TestFusion:
    def test_aliases(self):
        assert canonical_category(" Relax ") == "relaxed"
        assert canonical_category("fear") == "fearful"
        assert canonical_category("happy") == "happy"

    def test_fused_corpus(self, tmp_path):
        m, s = _sources(tmp_path / "src")
        manifest = fuse_corpus(m, s, tmp_path / "out", per_class=2, seed=3)
        entries = read_manifest(manifest)
        assert [e.label for e in entries].count("good") == 2
        assert len(entries) == 6
        for e in entries:
            if e.label == "neutral":
                src = s.parent / e.source.split(":", 1)[1]
                assert (manifest.parent / e.path).read_bytes() == src.read_bytes()
            else:
                assert e.source.startswith("music:")
                # overlay is truncated to the shorter (speech) input
                assert load_audio(manifest.parent / e.path).duration == pytest.approx(8.0)

    def test_deterministic(self, tmp_path):
        m, s = _sources(tmp_path / "src")
        a = read_manifest(fuse_corpus(m, s, tmp_path / "a", per_class=2, seed=3))
        b = read_manifest(fuse_corpus(m, s, tmp_path / "b", per_class=2, seed=3))
        assert [e.source for e in a] == [e.source for e in b]

    def test_missing_category_named(self, tmp_path):
        m, s = _sources(tmp_path / "src", drop=("fear",))
        with pytest.raises(DataError, match="fearful"):
            fuse_corpus(m, s, tmp_path / "out", per_class=2)

    def test_too_few_clips(self, tmp_path):
        m, s = _sources(tmp_path / "src")
        with pytest.raises(DataError, match="needs 5"):
            fuse_corpus(m, s, tmp_path / "out", per_class=5)
