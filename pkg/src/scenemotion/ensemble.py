"""Stacked ensemble: 15 base learners feed per-class scores to an RBF-SVM meta learner."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import StageError
from .features import FeatureExtractor, FrameParams
from .learners.nn import NnModel
from .learners.svm import SvmHyper, SvmModel, svm_train_multiclass
from .preprocess import Preprocessor, Scaler, fit_scaler, scale
from .selection import SelectionMask
from .tuning import Grid, _better, loocv

CANONICAL_TAGS = (
    "svm-kfold-r1", "svm-kfold-r2", "svm-kfold-r3", "svm-kfold-r4",
    "svm-nested-r1", "svm-nested-r2", "svm-nested-r3", "svm-nested-r4", "svm-nested-r5",
    "bpnn-e140", "bpnn-e200", "bpnn-e300",
    "cnn-e140", "cnn-e200", "cnn-e300",
)
N_CLASSES = 3
META_AXIS = (0.1, 0.5, 1.0, 2.0, 3.0)


def row_hashes(X) -> list[str]:
    """Content hash of each float64 row; used to audit train/holdout disjointness."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    return [hashlib.sha256(r.tobytes()).hexdigest()[:16] for r in X]


def learner_width(model) -> int:
    if isinstance(model, SvmModel):
        return model.n_features
    if isinstance(model, NnModel):
        return model.arch.input_width
    return int(model.n_features)


def learner_scores(model, X) -> np.ndarray:
    """(n, 3) class-score triple in class order 0, 1, 2."""
    s = np.asarray(model.scores(X), dtype=np.float64)
    if s.shape != (np.atleast_2d(X).shape[0], N_CLASSES):
        raise ValueError(f"learner returned scores of shape {s.shape}")
    return s


@dataclass
class BaseBank:
    tags: list
    models: list
    train_rows: dict = field(default_factory=dict)  # tag -> row hashes of its training data

    def __post_init__(self):
        missing = [t for t in CANONICAL_TAGS if t not in self.tags]
        if missing:
            raise ValueError(f"base bank is missing provenance slot(s): {', '.join(missing)}")
        if list(self.tags) != list(CANONICAL_TAGS):
            raise ValueError(f"base bank tags out of canonical order: {self.tags}")
        if len(self.models) != len(self.tags):
            raise ValueError("one model per tag required")
        widths = {learner_width(m) for m in self.models}
        if len(widths) != 1:
            raise ValueError(f"base learners disagree on input width: {sorted(widths)}")

    def __len__(self):
        return len(self.models)

    @property
    def input_width(self) -> int:
        return learner_width(self.models[0])

    def meta_features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_width:
            raise ValueError(f"base learners expect {self.input_width} features, got {X.shape[1]}")
        return np.hstack([learner_scores(m, X) for m in self.models])

    def predictions(self, X) -> np.ndarray:
        """(n, 15) hard labels, one column per learner."""
        return np.column_stack([np.asarray(m.predict(X)) for m in self.models])


def meta_column_names() -> list[str]:
    return [f"{t}:{c}" for t in CANONICAL_TAGS for c in ("bad", "neutral", "good")]


@dataclass
class MetaDataset:
    X: np.ndarray
    y: np.ndarray
    row_hashes: list  # hashes of the base-learner input rows, not of the meta rows


def build_meta_dataset(bank: BaseBank, X_holdout, y_holdout) -> MetaDataset:
    X_holdout = np.atleast_2d(np.asarray(X_holdout, dtype=np.float64))
    y_holdout = np.asarray(y_holdout)
    if X_holdout.shape[0] != y_holdout.size:
        raise ValueError("holdout features and labels differ in length")
    hashes = row_hashes(X_holdout)
    held = set(hashes)
    for tag in bank.tags:
        if held & set(bank.train_rows.get(tag, ())):
            raise ValueError(f"holdout rows overlap the training rows of {tag}")
    return MetaDataset(bank.meta_features(X_holdout), y_holdout.copy(), hashes)


def meta_grid() -> Grid:
    return Grid(META_AXIS, META_AXIS)


@dataclass
class MetaModel:
    """RBF-SVM over min-max scaled meta features.

    Base learners emit scores on very different scales (SVM decision sums near
    +/-1, ReLU activations up to ~10), so the meta columns are rescaled to
    [0, 1] with a scaler fit on the meta-training rows.
    """

    scaler: Scaler
    svm: SvmModel

    @property
    def n_features(self) -> int:
        return self.svm.n_features

    @property
    def hyper(self) -> SvmHyper:
        return self.svm.hyper

    @property
    def train_hash(self) -> str:
        return self.svm.train_hash

    @train_hash.setter
    def train_hash(self, value: str):
        self.svm.train_hash = value

    def _scaled(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"meta learner expects {self.n_features} inputs, got {X.shape[1]}")
        return scale(self.scaler, X)

    def scores(self, X) -> np.ndarray:
        return self.svm.scores(self._scaled(X))

    def predict(self, X) -> np.ndarray:
        return self.svm.predict(self._scaled(X))

    def to_dict(self):
        return {"scaler": self.scaler.to_dict(), "svm": self.svm.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Scaler.from_dict(d["scaler"]), SvmModel.from_dict(d["svm"]))


def _meta_fit(X, y, C, gamma):
    s = fit_scaler(X)
    return MetaModel(s, svm_train_multiclass(scale(s, X), y, SvmHyper(C, gamma)))


@dataclass
class MetaSearch:
    scores: dict  # (C, gamma) -> LOOCV accuracy
    best: tuple
    best_score: float
    n_fits: int

    def to_dict(self):
        return {"scores": [[c, g, s] for (c, g), s in sorted(self.scores.items())],
                "best": list(self.best), "best_score": self.best_score, "n_fits": self.n_fits}


def train_meta(md: MetaDataset, grid: Grid | None = None, train_fn=_meta_fit):
    """LOOCV grid search over (C, gamma), then a final fit on every meta row.

    The default ``train_fn`` refits the meta scaler inside every LOOCV fold.

    Returns (meta model, MetaSearch).
    """
    grid = grid or meta_grid()
    X, y = np.asarray(md.X, dtype=np.float64), np.asarray(md.y)
    if X.shape[1] != N_CLASSES * len(CANONICAL_TAGS):
        raise ValueError(f"meta dataset width {X.shape[1]}, expected {N_CLASSES * len(CANONICAL_TAGS)}")
    counts = np.bincount(y, minlength=N_CLASSES)
    if np.any(counts < 2):
        raise ValueError(f"meta training needs >= 2 rows per class, got {counts.tolist()}")
    scores, best, best_score, fits = {}, None, -np.inf, 0
    for params in grid.combinations():
        acc, n = loocv(X, y, train_fn, *params)
        fits += n
        scores[params] = acc
        if _better(acc, params, best_score, best):
            best, best_score = params, acc
    model = train_fn(X, y, *best)
    return model, MetaSearch(scores, best, best_score, fits + 1)


def majority_vote(bank: BaseBank, X) -> np.ndarray:
    """Plain plurality over base predictions, ties to the lowest class; a baseline only."""
    votes = bank.predictions(X)
    counts = np.stack([(votes == c).sum(axis=1) for c in range(N_CLASSES)], axis=1)
    return np.argmax(counts, axis=1)


def _canon(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class FrozenPreprocessing:
    sample_rate: int
    window_seconds: float
    frame_params: FrameParams
    preprocessor: Preprocessor
    mask: SelectionMask

    def state_hash(self) -> str:
        state = {
            "sample_rate": self.sample_rate,
            "window_seconds": self.window_seconds,
            "frame_params": self.frame_params.to_dict(),
            "outliers": self.preprocessor.outliers.to_dict(),
            "scaler": self.preprocessor.scaler.to_dict(),
            "keep": self.mask.keep.astype(int),
        }
        blob = json.dumps(_canon(state), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def transform(self, F) -> np.ndarray:
        """Raw 195-wide feature rows to learner input rows."""
        return self.mask.apply(self.preprocessor.transform(np.atleast_2d(F)))


@dataclass
class EnsembleModel:
    bank: BaseBank
    meta: MetaModel
    prep: FrozenPreprocessing
    meta_rows: list = field(default_factory=list)  # input-row hashes of the meta-training data
    _extractor: FeatureExtractor | None = field(default=None, init=False, repr=False, compare=False)

    def extractor(self) -> FeatureExtractor:
        if self._extractor is None:
            self._extractor = FeatureExtractor(self.prep.sample_rate, self.prep.frame_params)
        return self._extractor

    def predict_inputs(self, X) -> np.ndarray:
        """Labels for already preprocessed and masked rows."""
        return self.meta.predict(self.bank.meta_features(X))

    def predict_features(self, F) -> np.ndarray:
        try:
            X = self.prep.transform(F)
        except ValueError as exc:
            raise StageError("preprocess", exc) from exc
        try:
            meta = self.bank.meta_features(X)
        except ValueError as exc:
            raise StageError("base-learners", exc) from exc
        try:
            return self.meta.predict(meta)
        except ValueError as exc:
            raise StageError("meta", exc) from exc

    def predict_samples(self, windows) -> np.ndarray:
        """Labels for a sequence of raw sample arrays, one window each."""
        try:
            F = np.vstack([self.extractor().extract(w) for w in windows])
        except ValueError as exc:
            raise StageError("features", exc) from exc
        return self.predict_features(F)

    def predict(self, segment) -> int:
        if segment.sample_rate != self.prep.sample_rate:
            raise StageError("features", ValueError(
                f"segment rate {segment.sample_rate} differs from model rate {self.prep.sample_rate}"))
        return int(self.predict_samples([segment.samples])[0])


def assemble(bank: BaseBank, meta: MetaModel, prep: FrozenPreprocessing, meta_rows=()) -> EnsembleModel:
    """Validate widths and provenance, then freeze the parts into one model."""
    width = N_CLASSES * len(bank)
    if meta.n_features != width:
        raise ValueError(f"meta learner expects {meta.n_features} inputs, bank provides {width}")
    if bank.input_width != prep.mask.width:
        raise ValueError(f"selection keeps {prep.mask.width} features, learners expect {bank.input_width}")
    h = prep.state_hash()
    for tag, m in zip(bank.tags, bank.models):
        if m.train_hash != h:
            raise ValueError(f"provenance mismatch for {tag}: learner was trained under another preprocessing state")
    meta_rows = list(meta_rows)
    held = set(meta_rows)
    for tag in bank.tags:
        if held & set(bank.train_rows.get(tag, ())):
            raise ValueError(f"meta-training rows overlap the training rows of {tag}")
    return EnsembleModel(bank, meta, prep, meta_rows)
