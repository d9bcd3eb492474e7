"""Frame-level DSP features and their aggregation into a per-segment vector.

Each STFT frame yields 65 values (24 MFCC, 26 mel bands, 12 chroma, ZCR,
spectral centroid, spectral roll-off). A segment is summarised by the mean,
range and mean absolute deviation of every frame feature, giving 195 values
ordered as [all means, all ranges, all MADs].
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import get_window

LOG_FLOOR = 1e-10
AGGREGATES = ("mean", "range", "mad")


@dataclass(frozen=True)
class FrameParams:
    frame_length: int = 2048
    hop: int = 512
    window: str = "hann"
    n_mfcc: int = 24
    n_mfcc_filters: int = 24
    n_mel: int = 26
    n_chroma: int = 12
    rolloff_fraction: float = 0.85
    f_min: float = 0.0
    f_max: float | None = None

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_length:
            raise ValueError("need 0 < hop <= frame_length")
        if not 0.0 < self.rolloff_fraction < 1.0:
            raise ValueError("rolloff_fraction must lie in (0, 1)")

    @property
    def frame_feature_count(self) -> int:
        return self.n_mfcc + self.n_mel + self.n_chroma + 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FrameParams":
        return cls(**d)


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (frames, bins)
    bin_freqs: np.ndarray

    @property
    def frame_count(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def bin_count(self) -> int:
        return self.magnitudes.shape[1]


@dataclass
class MelFilterBank:
    weights: np.ndarray  # (n_filters, bins)
    centers_hz: np.ndarray

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


def frame_signal(samples: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Return a (frames, frame_length) view; frame t starts at sample t*hop."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < frame_length:
        raise ValueError(f"segment of {samples.size} samples is shorter than one frame ({frame_length})")
    count = (samples.size - frame_length) // hop + 1
    return np.lib.stride_tricks.sliding_window_view(samples, frame_length)[::hop][:count]


def stft(samples: np.ndarray, sample_rate: int, p: FrameParams = FrameParams()) -> Spectrogram:
    frames = frame_signal(samples, p.frame_length, p.hop)
    win = get_window(p.window, p.frame_length, fftbins=True)
    mags = np.abs(np.fft.rfft(frames * win, axis=1))
    freqs = np.fft.rfftfreq(p.frame_length, d=1.0 / sample_rate)
    return Spectrogram(mags, freqs)


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_bank(n_filters: int, bin_freqs, f_min: float, f_max: float) -> MelFilterBank:
    """Triangular filters with peaks equispaced on the mel scale.

    Filter k rises linearly (in Hz) from the centre of filter k-1 to its own
    centre and falls to zero at the centre of filter k+1; the outer edges are
    ``f_min`` and ``f_max``.
    """
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    if not 0.0 <= f_min < f_max:
        raise ValueError(f"degenerate frequency range [{f_min}, {f_max}]")
    bin_freqs = np.asarray(bin_freqs, dtype=np.float64)
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    f = bin_freqs[None, :]
    rising = (f - lo) / (mid - lo)
    falling = (hi - f) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(f"mel filters {empty.tolist()} cover no FFT bin; use fewer filters or a longer frame")
    return MelFilterBank(weights, edges[1:-1])


def mel_spectrogram(sp: Spectrogram, bank: MelFilterBank) -> np.ndarray:
    """Mel band energies: sum over bins of filter weight times squared magnitude."""
    if bank.weights.shape[1] != sp.bin_count:
        raise ValueError(f"filter bank has {bank.weights.shape[1]} bins, spectrogram {sp.bin_count}")
    return (sp.magnitudes ** 2) @ bank.weights.T


def dct_matrix(n_coeffs: int, n_bands: int) -> np.ndarray:
    n = np.arange(n_coeffs)[:, None]
    k = np.arange(1, n_bands + 1)[None, :]
    return np.cos(n * (k - 0.5) * np.pi / n_bands)


def log_energies(mel_energies) -> np.ndarray:
    return np.log(np.maximum(np.asarray(mel_energies, dtype=np.float64), LOG_FLOOR))


def mfcc(log_mel: np.ndarray, n_coeffs: int | None = None) -> np.ndarray:
    """Unnormalised DCT-II of log mel energies, coefficients 0..n_coeffs-1.

    ``log_mel`` is (frames, K) or (K,); energies must already be floored and logged.
    """
    log_mel = np.asarray(log_mel, dtype=np.float64)
    K = log_mel.shape[-1]
    basis = dct_matrix(K if n_coeffs is None else n_coeffs, K)
    return log_mel @ basis.T


def _sgn(x):
    return np.where(x >= 0, 1.0, -1.0)


def zcr(frame) -> np.ndarray | float:
    """Zero-crossing rate in [0, 1], computed within the frame (or each row of a 2-D array)."""
    x = np.asarray(frame, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("zcr needs at least 2 samples per frame")
    s = _sgn(x)
    transitions = x.shape[-1] - 1
    z = np.abs(np.diff(s, axis=-1)).sum(axis=-1) / (2.0 * transitions)
    return float(z) if np.ndim(z) == 0 else z


def spectral_centroid(magnitudes, bin_freqs) -> np.ndarray | float:
    """Magnitude-weighted mean frequency; 0 Hz for an all-zero spectrum."""
    m = np.asarray(magnitudes, dtype=np.float64)
    total = m.sum(axis=-1)
    num = m @ np.asarray(bin_freqs, dtype=np.float64)
    out = np.divide(num, total, out=np.zeros_like(num, dtype=np.float64), where=total > 0)
    return float(out) if np.ndim(out) == 0 else out


def spectral_rolloff(magnitudes, bin_freqs, fraction: float = 0.85) -> np.ndarray | float:
    """Lowest bin frequency at which cumulative energy reaches ``fraction`` of the total."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    m = np.atleast_2d(np.asarray(magnitudes, dtype=np.float64))
    freqs = np.asarray(bin_freqs, dtype=np.float64)
    energy = np.cumsum(m ** 2, axis=1)
    total = energy[:, -1]
    idx = np.argmax(energy >= fraction * total[:, None], axis=1)
    out = np.where(total > 0, freqs[idx], 0.0)
    return float(out[0]) if np.ndim(magnitudes) == 1 else out


def pitch_classes(bin_freqs, reference_hz: float = 440.0) -> np.ndarray:
    """Pitch class per bin (A = 0); -1 marks the DC bin, which is ignored."""
    f = np.asarray(bin_freqs, dtype=np.float64)
    cls = np.full(f.shape, -1, dtype=np.int64)
    pos = f > 0
    cls[pos] = np.mod(np.round(12.0 * np.log2(f[pos] / reference_hz)).astype(np.int64), 12)
    return cls


def chroma(sp: Spectrogram, n_chroma: int = 12) -> np.ndarray:
    """Octave-folded squared-magnitude energy per pitch class, (frames, 12)."""
    cls = pitch_classes(sp.bin_freqs)
    onehot = (cls[:, None] == np.arange(n_chroma)[None, :]).astype(np.float64)
    return (sp.magnitudes ** 2) @ onehot


def aggregate(frames: np.ndarray) -> np.ndarray:
    """Mean, range (max - min) and mean absolute deviation of every column."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 2:
        raise ValueError("aggregate needs at least 2 frames")
    mean = frames.mean(axis=0)
    rng = frames.max(axis=0) - frames.min(axis=0)
    mad = np.abs(frames - mean).mean(axis=0)
    return np.concatenate([mean, rng, mad])


class FeatureExtractor:
    """Holds the immutable filter banks for one (sample rate, FrameParams) pair."""

    def __init__(self, sample_rate: int, params: FrameParams = FrameParams()):
        self.sample_rate = int(sample_rate)
        self.params = params
        freqs = np.fft.rfftfreq(params.frame_length, d=1.0 / sample_rate)
        f_max = params.f_max if params.f_max is not None else sample_rate / 2.0
        self.mfcc_bank = build_mel_bank(params.n_mfcc_filters, freqs, params.f_min, f_max)
        self.mel_bank = build_mel_bank(params.n_mel, freqs, params.f_min, f_max)

    def frame_features(self, samples: np.ndarray) -> np.ndarray:
        p = self.params
        sp = stft(samples, self.sample_rate, p)
        coeffs = mfcc(log_energies(mel_spectrogram(sp, self.mfcc_bank)), p.n_mfcc)
        mel = mel_spectrogram(sp, self.mel_bank)
        chrom = chroma(sp, p.n_chroma)
        z = zcr(frame_signal(samples, p.frame_length, p.hop))
        cen = spectral_centroid(sp.magnitudes, sp.bin_freqs)
        roll = spectral_rolloff(sp.magnitudes, sp.bin_freqs, p.rolloff_fraction)
        return np.column_stack([coeffs, mel, chrom, z, cen, roll])

    def extract(self, samples: np.ndarray) -> np.ndarray:
        vec = aggregate(self.frame_features(samples))
        if not np.all(np.isfinite(vec)):
            raise ValueError("non-finite feature value")
        return vec

    def extract_many(self, segments) -> np.ndarray:
        rows = [self.extract(s.samples) for s in segments]
        return np.vstack(rows) if rows else np.zeros((0, len(feature_names(self.params))))


def frame_feature_names(p: FrameParams = FrameParams()) -> list[str]:
    return ([f"mfcc{i:02d}" for i in range(p.n_mfcc)]
            + [f"mel{i:02d}" for i in range(p.n_mel)]
            + [f"chroma{i:02d}" for i in range(p.n_chroma)]
            + ["zcr", "centroid", "rolloff"])


def feature_names(p: FrameParams = FrameParams()) -> list[str]:
    base = frame_feature_names(p)
    return [f"{name}_{agg}" for agg in AGGREGATES for name in base]


def write_feature_store(path, source_ids, labels, X, p: FrameParams = FrameParams()) -> None:
    """Tab-separated feature table with a header row naming each column."""
    names = feature_names(p)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != len(names):
        raise ValueError(f"expected {len(names)} columns, got {X.shape[1]}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["source_id", "label", *names]) + "\n")
        for sid, lab, row in zip(source_ids, labels, X):
            fh.write("\t".join([sid, lab, *(repr(float(v)) for v in row)]) + "\n")


def read_feature_store(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        ids, labels, rows = [], [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 3:
                continue
            ids.append(parts[0])
            labels.append(parts[1])
            rows.append([float(v) for v in parts[2:]])
    return header[2:], ids, labels, np.array(rows, dtype=np.float64)
