"""Boxplot outlier repair and min-max scaling, fitted on training rows only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FENCE_MULTIPLIER = 1.5


def _check_columns(X, width, what):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != width:
        raise ValueError(f"{what} expects {width} columns, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class OutlierModel:
    q1: np.ndarray
    q3: np.ndarray
    median: np.ndarray
    multiplier: float = FENCE_MULTIPLIER

    @property
    def iqr(self):
        return self.q3 - self.q1

    @property
    def lower_fence(self):
        return self.q1 - self.multiplier * self.iqr

    @property
    def upper_fence(self):
        return self.q3 + self.multiplier * self.iqr

    def to_dict(self):
        return {"q1": self.q1, "q3": self.q3, "median": self.median, "multiplier": self.multiplier}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["q1"]), np.asarray(d["q3"]), np.asarray(d["median"]), float(d["multiplier"]))


@dataclass(frozen=True)
class Scaler:
    x_min: np.ndarray
    x_max: np.ndarray

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["x_min"]), np.asarray(d["x_max"]))


def fit_outlier_bounds(X, multiplier: float = FENCE_MULTIPLIER) -> OutlierModel:
    """Per-feature quartiles (linear interpolation between closest ranks) and median."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 4:
        raise ValueError("outlier fitting needs a 2-D matrix with at least 4 rows")
    q1, med, q3 = np.percentile(X, [25, 50, 75], axis=0, method="linear")
    return OutlierModel(q1, q3, med, multiplier)


def repair_outliers(m: OutlierModel, X) -> np.ndarray:
    """Replace values outside the Tukey fences with the training median."""
    X = _check_columns(X, m.q1.size, "repair_outliers")
    outside = (X < m.lower_fence) | (X > m.upper_fence)
    return np.where(outside, m.median, X)


def fit_scaler(X) -> Scaler:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("scaler fitting needs at least one row")
    return Scaler(X.min(axis=0), X.max(axis=0))


def scale(s: Scaler, X) -> np.ndarray:
    """Min-max map to [0, 1]; constant features map to 0 and unseen values are clamped."""
    X = _check_columns(X, s.x_min.size, "scale")
    span = s.x_max - s.x_min
    out = np.divide(X - s.x_min, span, out=np.zeros_like(X), where=span > 0)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Preprocessor:
    """Fitted outlier model and scaler applied in that order."""

    outliers: OutlierModel
    scaler: Scaler

    @classmethod
    def fit(cls, X_train) -> "Preprocessor":
        om = fit_outlier_bounds(X_train)
        return cls(om, fit_scaler(repair_outliers(om, X_train)))

    def transform(self, X) -> np.ndarray:
        return scale(self.scaler, repair_outliers(self.outliers, X))
