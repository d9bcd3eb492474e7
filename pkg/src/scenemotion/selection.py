"""Four-stage feature filter bank: variance, chi-square, KDE drift, Spearman."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STAGES = ("variance", "chi2", "kde", "spearman")
GRID_POINTS = 512
# Boundary slack: a score that equals the threshold up to float rounding is kept.
_REL_SLACK = 1e-12


def _at_least(score, threshold):
    return score >= threshold - _REL_SLACK * abs(threshold)


# --- individual filters ------------------------------------------------------

def population_variance(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return ((X - X.mean(axis=0)) ** 2).sum(axis=0) / X.shape[0]


def variance_filter(X, threshold: float = 0.02) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("variance_filter needs a non-empty matrix")
    return _at_least(population_variance(X), threshold)


def chi2_scores(X, y, n_classes: int = 3) -> np.ndarray:
    """Chi-square of per-class feature sums against class-proportional expectations."""
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0):
        raise ValueError("chi-square filter requires non-negative features")
    y = np.asarray(y)
    onehot = (y[:, None] == np.arange(n_classes)[None, :]).astype(np.float64)
    observed = onehot.T @ X
    expected = (onehot.sum(axis=0) / y.size)[:, None] * X.sum(axis=0)[None, :]
    terms = np.divide((observed - expected) ** 2, expected,
                      out=np.zeros_like(observed), where=expected > 0)
    return terms.sum(axis=0)


def top_k(scores, k: int) -> np.ndarray:
    """Mask of the k largest scores; ties favour the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.zeros(scores.size, dtype=bool)
    if k >= scores.size:
        keep[:] = True
        return keep
    order = np.lexsort((np.arange(scores.size), -scores))
    keep[order[:k]] = True
    return keep


def chi2_filter(X, y, k: int = 60) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    return top_k(chi2_scores(X, y), k)


def kde_estimate(samples, h: float, x):
    """Gaussian kernel density estimate at ``x`` (scalar or array)."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("kde needs at least one sample")
    x = np.asarray(x, dtype=np.float64)
    u = (x[..., None] - samples) / h
    dens = np.exp(-0.5 * u * u).sum(axis=-1) / (samples.size * h * np.sqrt(2.0 * np.pi))
    return float(dens) if dens.ndim == 0 else dens


def silverman_bandwidth(samples) -> float:
    """0.9 * min(std, IQR/1.34) * n^(-1/5); falls back to std when the IQR is zero."""
    x = np.asarray(samples, dtype=np.float64)
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = (q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    return 0.9 * spread * x.size ** -0.2


def kde_overlap(train, test, grid_points: int = GRID_POINTS) -> float:
    """Overlap coefficient: integral of min(train density, test density)."""
    a = np.asarray(train, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    a_const = np.ptp(a) == 0
    b_const = np.ptp(b) == 0
    if a_const and b_const:
        return 1.0 if a[0] == b[0] else 0.0
    pooled = np.concatenate([a, b])
    fallback = silverman_bandwidth(pooled)
    ha = silverman_bandwidth(a) if not a_const else 0.0
    hb = silverman_bandwidth(b) if not b_const else 0.0
    ha = ha if ha > 0 else fallback
    hb = hb if hb > 0 else fallback
    # pad by three bandwidths so tails of identical distributions are not clipped
    pad = 3.0 * max(ha, hb)
    grid = np.linspace(pooled.min() - pad, pooled.max() + pad, grid_points)
    fa = kde_estimate(a, ha, grid)
    fb = kde_estimate(b, hb, grid)
    overlap = float(np.minimum(fa, fb).sum() * (grid[1] - grid[0]))
    return min(max(overlap, 0.0), 1.0)


def kde_overlap_scores(X_train, X_test) -> np.ndarray:
    X_train = np.asarray(X_train, dtype=np.float64)
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_train.shape[1] != X_test.shape[1]:
        raise ValueError("train and test feature dimensions differ")
    return np.array([kde_overlap(X_train[:, j], X_test[:, j]) for j in range(X_train.shape[1])])


def kde_overlap_filter(X_train, X_test, overlap_threshold: float = 0.75) -> np.ndarray:
    return _at_least(kde_overlap_scores(X_train, X_test), overlap_threshold)


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties replaced by their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    start = 0
    while start < x.size:
        stop = start + 1
        while stop < x.size and xs[stop] == xs[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
        start = stop
    return ranks


def spearman(x, y) -> float:
    """Rank correlation on mean-centred average ranks; 0 when either side is constant."""
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else 0.0


def spearman_scores(X, y) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([spearman(X[:, j], y) for j in range(X.shape[1])])


def spearman_filter(X, y, threshold: float = 0.08) -> np.ndarray:
    return _at_least(np.abs(spearman_scores(X, y)), threshold)


# --- filter bank -------------------------------------------------------------

@dataclass(frozen=True)
class FilterThresholds:
    variance: float = 0.02
    chi2_k: int = 60
    kde_overlap: float = 0.75
    spearman: float = 0.08


@dataclass
class SelectionMask:
    keep: np.ndarray
    dropped_by: dict = field(default_factory=dict)   # feature index -> stage name
    stage_counts: list = field(default_factory=list)  # survivors after each stage
    scores: dict = field(default_factory=dict)        # stage -> per-feature score (nan = not scored)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.keep)

    @property
    def width(self) -> int:
        return int(self.keep.sum())

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.keep.size:
            raise ValueError(f"mask expects {self.keep.size} features, got {X.shape[-1]}")
        return X[..., self.keep]

    def to_dict(self):
        return {
            "keep": self.keep.astype(np.int64),
            "dropped_by": {str(k): v for k, v in sorted(self.dropped_by.items())},
            "stage_counts": [int(c) for c in self.stage_counts],
            "scores": dict(self.scores),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["keep"]).astype(bool),
                   {int(k): v for k, v in d["dropped_by"].items()},
                   list(d["stage_counts"]),
                   {k: np.asarray(v) for k, v in d["scores"].items()})

    def report(self, names=None) -> str:
        n = self.keep.size
        names = names or [f"f{j}" for j in range(n)]
        lines = ["feature\t" + "\t".join(STAGES) + "\tstatus"]
        for j in range(n):
            cells = []
            for stage in STAGES:
                v = self.scores.get(stage, np.full(n, np.nan))[j]
                cells.append("-" if np.isnan(v) else f"{v:.4f}")
            status = "kept" if self.keep[j] else f"dropped:{self.dropped_by[j]}"
            lines.append("\t".join([names[j], *cells, status]))
        return "\n".join(lines)


def run_filter_bank(X_train, y_train, X_test, th: FilterThresholds = FilterThresholds()) -> SelectionMask:
    """Apply the four filters in order, each to the survivors of the previous one."""
    X_train = np.asarray(X_train, dtype=np.float64)
    X_test = np.asarray(X_test, dtype=np.float64)
    n = X_train.shape[1]
    alive = np.arange(n)
    dropped: dict[int, str] = {}
    counts: list[int] = []
    scores = {s: np.full(n, np.nan) for s in STAGES}

    def narrow(stage, local_keep, local_scores):
        nonlocal alive
        scores[stage][alive] = local_scores
        for j in alive[~local_keep]:
            dropped[int(j)] = stage
        alive = alive[local_keep]
        counts.append(int(alive.size))

    v = population_variance(X_train[:, alive])
    narrow("variance", _at_least(v, th.variance), v)
    if alive.size:
        c = chi2_scores(X_train[:, alive], y_train)
        narrow("chi2", top_k(c, th.chi2_k), c)
    else:
        counts.append(0)
    if alive.size:
        o = kde_overlap_scores(X_train[:, alive], X_test[:, alive])
        narrow("kde", _at_least(o, th.kde_overlap), o)
    else:
        counts.append(0)
    if alive.size:
        r = spearman_scores(X_train[:, alive], y_train)
        narrow("spearman", _at_least(np.abs(r), th.spearman), r)
    else:
        counts.append(0)
    if alive.size == 0:
        raise ValueError("filter bank kept no features; relax the thresholds "
                         f"(survivors per stage: {dict(zip(STAGES, counts))})")
    keep = np.zeros(n, dtype=bool)
    keep[alive] = True
    return SelectionMask(keep, dropped, counts, scores)
