"""Corpus builders: a separable synthetic tone corpus and music+speech fusion."""

from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np

from .dataio import ENGINE_RATE, WINDOW_SECONDS, Emotion, ManifestEntry, Waveform, load_audio, mix, read_manifest, \
    save_audio, write_manifest
from .errors import DataError

# class -> (tone register Hz, noise band Hz, amplitude-modulation rate Hz)
TONE_PROFILES = {
    Emotion.BAD: ((110.0, 220.0), (200.0, 800.0), (1.0, 2.0)),
    Emotion.NEUTRAL: ((330.0, 550.0), (1500.0, 3000.0), (4.0, 5.0)),
    Emotion.GOOD: ((880.0, 1400.0), (4500.0, 8000.0), (8.0, 10.0)),
}


def band_noise(n: int, rate: int, band: tuple, rng) -> np.ndarray:
    """White noise restricted to ``band`` by zeroing FFT bins outside it; unit RMS."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(f < band[0]) | (f > band[1])] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x * x))


def tone_clip(label: Emotion, rng, rate: int = ENGINE_RATE, seconds: float = WINDOW_SECONDS) -> Waveform:
    tone_band, noise_band, am_band = TONE_PROFILES[Emotion(label)]
    n = int(round(rate * seconds))
    t = np.arange(n) / rate
    f0 = rng.uniform(*tone_band)
    tone = np.sin(2 * np.pi * f0 * t) + 0.5 * np.sin(2 * np.pi * 2 * f0 * t + rng.uniform(0, 2 * np.pi))
    am = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(*am_band) * t + rng.uniform(0, 2 * np.pi))
    x = 0.25 * am * tone + 0.08 * band_noise(n, rate, noise_band, rng)
    return Waveform(np.clip(x, -1.0, 1.0), rate)


def make_tone_corpus(out_dir, per_class: int = 30, seed: int = 0, rate: int = ENGINE_RATE,
                     seconds: float = WINDOW_SECONDS) -> Path:
    """Write ``3 * per_class`` labelled WAV clips plus ``manifest.tsv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for label in (Emotion.GOOD, Emotion.NEUTRAL, Emotion.BAD):
        for i in range(per_class):
            name = f"audio/{label.tag}_{i:03d}.wav"
            save_audio(out / name, tone_clip(label, rng, rate, seconds))
            entries.append(ManifestEntry(name, label.tag, "tone"))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, entries)
    return manifest


# fusion rules: emotion -> (music categories, speech categories); an empty music list means passthrough
FUSION_TABLE = {
    Emotion.GOOD: (("happy",), ("relaxed", "surprised")),
    Emotion.NEUTRAL: ((), ("neutral",)),
    Emotion.BAD: (("angry",), ("sad", "fearful")),
}
_ALIASES = {"relax": "relaxed", "calm": "relaxed", "surprise": "surprised", "fear": "fearful",
            "anger": "angry", "happiness": "happy", "sadness": "sad"}


def canonical_category(text: str) -> str:
    t = text.strip().lower()
    return _ALIASES.get(t, t)


def _by_category(entries):
    out: dict[str, list] = {}
    for e in entries:
        out.setdefault(canonical_category(e.label), []).append(e)
    return out


def _pick(pool, k, rng, slot):
    if len(pool) < k:
        raise DataError(f"fusion slot {slot} needs {k} source clips, found {len(pool)}")
    return [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))]


def fuse_corpus(music_manifest, speech_manifest, out_dir, per_class: int = 30, seed: int = 0,
                rate: int = ENGINE_RATE) -> Path:
    """Overlay music and speech clips per the fusion table and write a labelled manifest.

    Neutral clips are copied byte for byte. Good and Bad pair a randomly chosen
    music clip with a randomly chosen speech clip from the union of the listed
    speech categories. Every listed category must be present.
    """
    music_manifest, speech_manifest = Path(music_manifest), Path(speech_manifest)
    music = _by_category(read_manifest(music_manifest))
    speech = _by_category(read_manifest(speech_manifest))
    for emotion, (m_cats, s_cats) in FUSION_TABLE.items():
        for c in m_cats:
            if not music.get(c):
                raise DataError(f"fusion slot {emotion.tag}: music category '{c}' is missing")
        for c in s_cats:
            if not speech.get(c):
                raise DataError(f"fusion slot {emotion.tag}: speech category '{c}' is missing")
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for emotion in (Emotion.GOOD, Emotion.NEUTRAL, Emotion.BAD):
        m_cats, s_cats = FUSION_TABLE[emotion]
        s_pool = [e for c in s_cats for e in speech[c]]
        s_pick = _pick(s_pool, per_class, rng, f"{emotion.tag}/speech{list(s_cats)}")
        if not m_cats:
            for i, s in enumerate(s_pick):
                src = speech_manifest.parent / s.path
                name = f"audio/{emotion.tag}_{i:03d}{src.suffix or '.wav'}"
                shutil.copyfile(src, out / name)
                entries.append(ManifestEntry(name, emotion.tag, f"speech:{s.path}"))
            continue
        m_pool = [e for c in m_cats for e in music[c]]
        m_pick = rng.choice(len(m_pool), size=per_class, replace=len(m_pool) < per_class)
        for i, (mi, s) in enumerate(zip(m_pick, s_pick)):
            m = m_pool[int(mi)]
            w = mix(load_audio(music_manifest.parent / m.path, rate), load_audio(speech_manifest.parent / s.path, rate))
            name = f"audio/{emotion.tag}_{i:03d}.wav"
            save_audio(out / name, w)
            entries.append(ManifestEntry(name, emotion.tag, f"music:{m.path}+speech:{s.path}"))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, entries)
    return manifest
