import numpy as np
import pytest
from scipy.io import wavfile

from scenemotion.dataio import (Dataset, Emotion, ManifestEntry, Segment, Waveform, load_audio, load_dataset, mix,
                                pad_to_window, partition, partition_indices, read_manifest, round_half_up, segment,
                                write_manifest)
from scenemotion.errors import DataError

RATE = 22050


def _wave(seconds, rate=RATE, value=0.1):
    return Waveform(np.full(int(round(seconds * rate)), value), rate)


class TestEmotion:
    def test_ordinal_codes(self):
        assert (Emotion.BAD, Emotion.NEUTRAL, Emotion.GOOD) == (0, 1, 2)

    def test_parse_case_insensitive(self):
        assert Emotion.parse(" Good ") is Emotion.GOOD

    def test_parse_rejects_unknown(self):
        with pytest.raises(DataError):
            Emotion.parse("happy")


class TestWaveform:
    def test_rejects_empty(self):
        with pytest.raises(DataError):
            Waveform(np.zeros(0), RATE)

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            Waveform(np.array([0.0, np.nan]), RATE)

    def test_rejects_bad_rate(self):
        with pytest.raises(DataError):
            Waveform(np.zeros(4), 0)


class TestLoadAudio:
    def test_silence_maps_to_zeros(self, tmp_path):
        wavfile.write(tmp_path / "s.wav", RATE, np.zeros(RATE, dtype=np.int16))
        w = load_audio(tmp_path / "s.wav")
        assert w.samples.size == RATE
        assert np.all(w.samples == 0.0)

    def test_stereo_average(self, tmp_path):
        data = np.column_stack([np.full(1000, 0.5), np.full(1000, -0.5)]).astype(np.float32)
        wavfile.write(tmp_path / "st.wav", RATE, data)
        np.testing.assert_array_equal(load_audio(tmp_path / "st.wav").samples, 0.0)

    @pytest.mark.parametrize("dtype,scale", [(np.int16, 32767), (np.int32, 2**31 - 1), (np.float32, 1.0)])
    def test_encodings_normalised(self, tmp_path, dtype, scale):
        x = (np.sin(np.arange(500) / 7.0) * 0.5 * scale).astype(dtype)
        wavfile.write(tmp_path / "e.wav", RATE, x)
        w = load_audio(tmp_path / "e.wav")
        np.testing.assert_allclose(w.samples, np.sin(np.arange(500) / 7.0) * 0.5, atol=1e-4)

    def test_uint8(self, tmp_path):
        wavfile.write(tmp_path / "u.wav", RATE, np.full(100, 128, dtype=np.uint8))
        np.testing.assert_array_equal(load_audio(tmp_path / "u.wav").samples, 0.0)

    def test_resample_length_and_pitch(self, tmp_path):
        n = 44100
        t = np.arange(n) / 44100
        wavfile.write(tmp_path / "t.wav", 44100, (0.5 * np.sin(2 * np.pi * 440 * t)).astype(np.float32))
        w = load_audio(tmp_path / "t.wav", RATE)
        assert abs(w.samples.size - int(np.ceil(n / 2))) <= 1
        # frequency by zero-padded FFT peak with parabolic refinement
        x = w.samples[2000:-2000] * np.hanning(w.samples.size - 4000)
        spec = np.abs(np.fft.rfft(x, 1 << 20))
        k = int(np.argmax(spec))
        a, b, c = np.log(spec[k - 1:k + 2])
        k_ref = k + 0.5 * (a - c) / (a - 2 * b + c)
        assert abs(k_ref * RATE / (1 << 20) - 440.0) < 0.1

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_audio(tmp_path / "nope.wav")

    def test_zero_length(self, tmp_path):
        wavfile.write(tmp_path / "z.wav", RATE, np.zeros(0, dtype=np.int16))
        with pytest.raises(DataError):
            load_audio(tmp_path / "z.wav")

    def test_garbage_file(self, tmp_path):
        (tmp_path / "g.wav").write_bytes(b"not a wav file at all")
        with pytest.raises(DataError):
            load_audio(tmp_path / "g.wav")


class TestSegment:
    @pytest.mark.parametrize("seconds,count", [(70, 10), (73, 10), (5, 0)])
    def test_counts(self, seconds, count):
        assert len(segment(_wave(seconds), 7.0)) == count

    def test_exact_window_length(self):
        segs = segment(_wave(15), 7.0, source_id="clip", label=Emotion.GOOD)
        assert all(s.samples.size == 7 * RATE for s in segs)
        assert [s.source_id for s in segs] == ["clip#0", "clip#1"]
        assert all(s.label is Emotion.GOOD for s in segs)

    def test_concatenate_resegment_roundtrip(self, rng):
        parts = [rng.uniform(-1, 1, 7 * 100) for _ in range(4)]
        segs = segment(Waveform(np.concatenate(parts), 100), 7.0)
        for s, p in zip(segs, parts):
            np.testing.assert_array_equal(s.samples, p)

    def test_pad_to_window(self):
        w = pad_to_window(_wave(3), 7.0)
        assert w.samples.size == 7 * RATE
        assert np.all(w.samples[3 * RATE:] == 0.0)


class TestMix:
    def test_silence_identity(self, rng):
        x = Waveform(rng.uniform(-0.5, 0.5, 100), RATE)
        np.testing.assert_array_equal(mix(x, Waveform(np.zeros(100), RATE)).samples, x.samples)

    def test_clip(self):
        out = mix(Waveform(np.full(10, 0.8), RATE), Waveform(np.full(10, 0.8), RATE))
        np.testing.assert_array_equal(out.samples, 1.0)

    def test_truncates(self):
        assert mix(Waveform(np.zeros(100), RATE), Waveform(np.zeros(80), RATE)).samples.size == 80

    def test_commutative(self, rng):
        a = Waveform(rng.uniform(-0.4, 0.4, 50), RATE)
        b = Waveform(rng.uniform(-0.4, 0.4, 60), RATE)
        np.testing.assert_array_equal(mix(a, b).samples, mix(b, a).samples)

    def test_rate_mismatch(self):
        with pytest.raises(DataError):
            mix(Waveform(np.zeros(4), RATE), Waveform(np.zeros(4), 16000))


class TestManifest:
    def test_roundtrip(self, tmp_path):
        entries = [ManifestEntry("a.wav", "good", "s1"), ManifestEntry("b/c.wav", "bad", "s2")]
        write_manifest(tmp_path / "m.tsv", entries)
        assert read_manifest(tmp_path / "m.tsv") == entries

    def test_comments_and_blank_lines(self, tmp_path):
        (tmp_path / "m.tsv").write_text("# header\n\na.wav\tneutral\tx\n")
        assert len(read_manifest(tmp_path / "m.tsv")) == 1

    def test_malformed_row(self, tmp_path):
        (tmp_path / "m.tsv").write_text("only-one-column\n")
        with pytest.raises(DataError):
            read_manifest(tmp_path / "m.tsv")

    def test_load_dataset_segments_and_labels(self, tmp_path):
        wavfile.write(tmp_path / "a.wav", RATE, np.zeros(15 * RATE, dtype=np.int16))
        wavfile.write(tmp_path / "b.wav", RATE, np.zeros(3 * RATE, dtype=np.int16))
        write_manifest(tmp_path / "m.tsv", [ManifestEntry("a.wav", "good"), ManifestEntry("b.wav", "bad")])
        d = load_dataset(tmp_path / "m.tsv")
        assert len(d) == 2
        np.testing.assert_array_equal(d.labels, [2, 2])
        padded = load_dataset(tmp_path / "m.tsv", pad_short=True)
        np.testing.assert_array_equal(padded.labels, [2, 2, 0])

    def test_unlabeled_row(self, tmp_path):
        wavfile.write(tmp_path / "a.wav", RATE, np.zeros(8 * RATE, dtype=np.int16))
        (tmp_path / "m.tsv").write_text("a.wav\t\tsrc\n")
        with pytest.raises(DataError):
            load_dataset(tmp_path / "m.tsv")


class TestPartition:
    def test_round_half_up(self):
        assert round_half_up(13.5) == 14
        assert round(13.5) == 14 and round(12.5) == 12  # banker's rounding differs at .5

    @pytest.mark.parametrize("n,frac,n_test", [(90, 0.15, 14), (100, 0.15, 15), (10, 0.5, 5)])
    def test_sizes(self, n, frac, n_test):
        tr, te = partition_indices(np.arange(n) % 3, frac, seed=1)
        assert te.size == n_test and tr.size == n - n_test

    def test_disjoint_cover_many_seeds(self):
        y = np.arange(90) % 3
        for seed in range(25):
            tr, te = partition_indices(y, 0.15, seed)
            assert np.intersect1d(tr, te).size == 0
            np.testing.assert_array_equal(np.union1d(tr, te), np.arange(90))

    def test_deterministic(self):
        y = np.arange(30) % 3
        a = partition_indices(y, 0.2, 5)
        b = partition_indices(y, 0.2, 5)
        np.testing.assert_array_equal(a[1], b[1])

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
    def test_bad_fraction(self, frac):
        with pytest.raises(DataError):
            partition_indices(np.zeros(10), frac, 0)

    def test_dataset_partition_requires_all_classes(self):
        segs = [Segment(np.zeros(4), RATE, f"s{i}", Emotion.GOOD) for i in range(6)]
        with pytest.raises(DataError):
            partition(Dataset(segs), 0.5, 0)
