"""Audio loading, segmentation, mixing, manifests and train/test partitioning."""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

ENGINE_RATE = 22050
WINDOW_SECONDS = 7.0


class Emotion(enum.IntEnum):
    """Three-way label with a fixed ordinal coding (used by the Spearman filter)."""

    BAD = 0
    NEUTRAL = 1
    GOOD = 2

    @property
    def tag(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Emotion":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise DataError(f"unknown emotion label {text!r}; expected good|neutral|bad") from None


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DataError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise DataError("sample rate must be positive")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class Segment:
    samples: np.ndarray
    sample_rate: int
    source_id: str
    label: Emotion | None = None


@dataclass
class Dataset:
    segments: list[Segment]
    manifest_path: Path | None = None

    def __post_init__(self):
        rates = {s.sample_rate for s in self.segments}
        if len(rates) > 1:
            raise DataError(f"mixed sample rates in dataset: {sorted(rates)}")
        for s in self.segments:
            if s.label is None:
                raise DataError(f"segment {s.source_id} is unlabeled")

    def __len__(self):
        return len(self.segments)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.segments], dtype=np.int64)


@dataclass
class ManifestEntry:
    path: str
    label: str
    source: str = ""


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32, so one scale covers both
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise DataError(f"unsupported WAV sample encoding {data.dtype}")


def resample(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    """Polyphase (windowed-sinc FIR) resampling; output length is ceil(n * dst/src)."""
    if src_rate == dst_rate:
        return np.asarray(samples, dtype=np.float64)
    ratio = Fraction(dst_rate, src_rate)
    return resample_poly(samples, ratio.numerator, ratio.denominator)


def load_audio(path, engine_rate: int = ENGINE_RATE) -> Waveform:
    """Read a PCM WAV file as a mono waveform at ``engine_rate``.

    Stereo channels are averaged. Integer PCM is scaled by its full-scale
    value, so silence maps to exact zeros and the result lies in [-1, 1].
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"unreadable WAV file {path}: {exc}") from exc
    x = _pcm_to_float(np.asarray(data))
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise DataError(f"zero-length audio: {path}")
    x = resample(x, int(rate), engine_rate)
    return Waveform(np.clip(x, -1.0, 1.0), engine_rate)


def save_audio(path, w: Waveform) -> None:
    """Write a waveform as 16-bit PCM."""
    pcm = np.round(np.clip(w.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    wavfile.write(path, w.sample_rate, pcm)


def window_length(sample_rate: int, window_seconds: float) -> int:
    return int(round(window_seconds * sample_rate))


def segment(w: Waveform, window_seconds: float = WINDOW_SECONDS, source_id: str = "",
            label: Emotion | None = None) -> list[Segment]:
    """Split into consecutive non-overlapping windows; the trailing remainder is dropped."""
    if window_seconds <= 0:
        raise DataError("window_seconds must be positive")
    n = window_length(w.sample_rate, window_seconds)
    count = w.samples.size // n
    return [
        Segment(w.samples[k * n:(k + 1) * n].copy(), w.sample_rate, f"{source_id}#{k}", label)
        for k in range(count)
    ]


def pad_to_window(w: Waveform, window_seconds: float = WINDOW_SECONDS) -> Waveform:
    """Zero-pad a sub-window waveform up to exactly one window."""
    n = window_length(w.sample_rate, window_seconds)
    if w.samples.size >= n:
        return w
    return Waveform(np.concatenate([w.samples, np.zeros(n - w.samples.size)]), w.sample_rate)


def mix(a: Waveform, b: Waveform) -> Waveform:
    """Equal-gain overlay, truncated to the shorter input and hard-clipped to [-1, 1]."""
    if a.sample_rate != b.sample_rate:
        raise DataError(f"sample-rate mismatch: {a.sample_rate} vs {b.sample_rate}")
    n = min(a.samples.size, b.samples.size)
    return Waveform(np.clip(a.samples[:n] + b.samples[:n], -1.0, 1.0), a.sample_rate)


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected 'path<TAB>label<TAB>source'")
            entries.append(ManifestEntry(parts[0], parts[1].strip(), parts[2] if len(parts) > 2 else ""))
    return entries


def write_manifest(path, entries) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(f"{e.path}\t{e.label}\t{e.source}\n")


def load_dataset(manifest_path, engine_rate: int = ENGINE_RATE,
                 window_seconds: float = WINDOW_SECONDS, pad_short: bool = False) -> Dataset:
    """Load every manifest entry, segment it, and label segments with the file label.

    Files are processed in manifest order so downstream seeding is reproducible.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    segments: list[Segment] = []
    for e in read_manifest(manifest_path):
        if not e.label:
            raise DataError(f"unlabeled manifest row: {e.path}")
        label = Emotion.parse(e.label)
        w = load_audio(root / e.path, engine_rate)
        if pad_short:
            w = pad_to_window(w, window_seconds)
        segments.extend(segment(w, window_seconds, source_id=e.path, label=label))
    return Dataset(segments, manifest_path)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def partition_indices(labels, test_fraction: float, seed: int):
    """Random train/test index split with ``round_half_up(fraction * N)`` test rows."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    n = labels.size
    n_test = round_half_up(test_fraction * n)
    order = np.random.default_rng(seed).permutation(n)
    test = np.sort(order[:n_test])
    train = np.sort(order[n_test:])
    return train, test


def partition(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    labels = d.labels
    missing = set(int(e) for e in Emotion) - set(labels.tolist())
    if missing:
        raise DataError(f"dataset lacks classes {sorted(Emotion(m).tag for m in missing)}")
    train, test = partition_indices(labels, test_fraction, seed)
    return (Dataset([d.segments[i] for i in train], d.manifest_path),
            Dataset([d.segments[i] for i in test], d.manifest_path))


def relpath(path, start) -> str:
    return Path(os.path.relpath(path, start)).as_posix()
