"""Run configuration read from an INI file, plus per-stage seed derivation."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .features import FrameParams
from .learners.nn import TrainConfig
from .selection import FilterThresholds


def stage_seed(seed: int, tag: str) -> int:
    """Independent 63-bit seed for one pipeline stage: sha256 of "seed:tag"."""
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


@dataclass(frozen=True)
class SearchConfig:
    k: int = 5
    k_outer: int = 5
    k_inner: int = 5
    kfold_rounds: int = 4
    nested_rounds: int = 5
    first_grid: tuple = (0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0)
    nested_first_grid: tuple = (0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0)
    meta_grid: tuple = (0.1, 0.5, 1.0, 2.0, 3.0)
    rel_span: float = 0.25
    decay: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    seed: int
    manifest: str = ""
    music_manifest: str = ""
    speech_manifest: str = ""
    out_dir: str = "out"
    sample_rate: int = 22050
    window_seconds: float = 7.0
    pad_short: bool = False
    frame: FrameParams = field(default_factory=FrameParams)
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)
    test_fraction: float = 0.15
    holdout_fraction: float = 0.2
    per_class: int = 30
    search: SearchConfig = field(default_factory=SearchConfig)
    nn: TrainConfig = field(default_factory=TrainConfig)
    base_dir: str = "."

    def __post_init__(self):
        checks = [
            (self.sample_rate > 0, "audio.sample_rate must be positive"),
            (self.window_seconds > 0, "audio.window_seconds must be positive"),
            (0 <= self.thresholds.variance < 1, "filters.variance must lie in [0, 1)"),
            (self.thresholds.chi2_k >= 1, "filters.chi2_k must be >= 1"),
            (0 <= self.thresholds.kde_overlap <= 1, "filters.kde_overlap must lie in [0, 1]"),
            (0 <= self.thresholds.spearman <= 1, "filters.spearman must lie in [0, 1]"),
            (0 < self.test_fraction < 1, "split.test_fraction must lie in (0, 1)"),
            (0 < self.holdout_fraction < 1, "split.holdout_fraction must lie in (0, 1)"),
            (self.per_class >= 1, "synth.per_class must be >= 1"),
            (min(self.search.k, self.search.k_outer, self.search.k_inner) >= 2, "cv fold counts must be >= 2"),
            (self.search.kfold_rounds >= 1 and self.search.nested_rounds >= 1, "round counts must be >= 1"),
            (self.seed >= 0, "run.seed must be a non-negative integer"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def with_overrides(self, seed=None, out_dir=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(Path(out_dir).resolve()))
        return cfg


def load_config(path=None, seed=None) -> RunConfig:
    """Parse an INI file; a seed must come from the file or the ``seed`` argument."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    base = "."
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        base = str(path.resolve().parent)
    try:
        return _from_parser(cp, base, seed)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def _from_parser(cp, base, seed) -> RunConfig:
    def get(section, key, conv=str, default=None):
        if cp.has_option(section, key):
            raw = cp.get(section, key).strip()
            return conv(raw) if conv is not bool else cp.getboolean(section, key)
        return default

    if seed is None:
        seed = get("run", "seed", int)
    if seed is None:
        raise ConfigError("a seed is required: set [run] seed or pass --seed")

    fp_defaults = FrameParams()
    frame = FrameParams(
        frame_length=get("features", "frame_length", int, fp_defaults.frame_length),
        hop=get("features", "hop", int, fp_defaults.hop),
        n_mfcc=get("features", "n_mfcc", int, fp_defaults.n_mfcc),
        n_mfcc_filters=get("features", "n_mfcc_filters", int, fp_defaults.n_mfcc_filters),
        n_mel=get("features", "n_mel", int, fp_defaults.n_mel),
        n_chroma=get("features", "n_chroma", int, fp_defaults.n_chroma),
        rolloff_fraction=get("features", "rolloff_fraction", float, fp_defaults.rolloff_fraction),
    )
    th_defaults = FilterThresholds()
    thresholds = FilterThresholds(
        variance=get("filters", "variance", float, th_defaults.variance),
        chi2_k=get("filters", "chi2_k", int, th_defaults.chi2_k),
        kde_overlap=get("filters", "kde_overlap", float, th_defaults.kde_overlap),
        spearman=get("filters", "spearman", float, th_defaults.spearman),
    )
    sd = SearchConfig()
    search = SearchConfig(
        k=get("cv", "k", int, sd.k),
        k_outer=get("cv", "k_outer", int, sd.k_outer),
        k_inner=get("cv", "k_inner", int, sd.k_inner),
        kfold_rounds=get("cv", "kfold_rounds", int, sd.kfold_rounds),
        nested_rounds=get("cv", "nested_rounds", int, sd.nested_rounds),
        first_grid=get("cv", "first_grid", _floats, sd.first_grid),
        nested_first_grid=get("cv", "nested_first_grid", _floats, sd.nested_first_grid),
        meta_grid=get("cv", "meta_grid", _floats, sd.meta_grid),
        rel_span=get("cv", "rel_span", float, sd.rel_span),
        decay=get("cv", "decay", float, sd.decay),
    )
    nd = TrainConfig()
    nn = TrainConfig(
        batch_size=get("nn", "batch_size", int, nd.batch_size),
        learning_rate=get("nn", "learning_rate", float, nd.learning_rate),
        max_epochs=get("nn", "max_epochs", int, nd.max_epochs),
        stop_epochs=get("nn", "stop_epochs", _ints, nd.stop_epochs),
    )
    return RunConfig(
        seed=int(seed),
        manifest=get("paths", "manifest", str, ""),
        music_manifest=get("paths", "music_manifest", str, ""),
        speech_manifest=get("paths", "speech_manifest", str, ""),
        out_dir=get("paths", "out_dir", str, "out"),
        sample_rate=get("audio", "sample_rate", int, 22050),
        window_seconds=get("audio", "window_seconds", float, 7.0),
        pad_short=get("audio", "pad_short", bool, False),
        frame=frame,
        thresholds=thresholds,
        test_fraction=get("split", "test_fraction", float, 0.15),
        holdout_fraction=get("split", "holdout_fraction", float, 0.2),
        per_class=get("synth", "per_class", int, 30),
        search=search,
        nn=nn,
        base_dir=base,
    )
