"""Grid search with iterative refinement, K-fold, nested and leave-one-out CV.

``train_fn(X, y, C, gamma)`` must return an object with ``predict``. Every
protocol counts the fits it performs so callers can audit the cost.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .evaluation import EvaluationReport

ROUND1_AXIS = (0.1, 0.5, 1, 2, 3, 5, 7, 10)
_TIE = 1e-12


@dataclass(frozen=True)
class Grid:
    c_values: tuple
    gamma_values: tuple

    def __post_init__(self):
        for name, vals in (("C", self.c_values), ("gamma", self.gamma_values)):
            vals = list(vals)
            if not vals or any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} candidates must be non-empty, positive and strictly ascending: {vals}")
        object.__setattr__(self, "c_values", tuple(float(v) for v in self.c_values))
        object.__setattr__(self, "gamma_values", tuple(float(v) for v in self.gamma_values))

    def combinations(self):
        return [(c, g) for c in self.c_values for g in self.gamma_values]

    def __len__(self):
        return len(self.c_values) * len(self.gamma_values)

    @classmethod
    def singleton(cls, C, gamma):
        return cls((C,), (gamma,))


def round1_grid() -> Grid:
    return Grid(ROUND1_AXIS, ROUND1_AXIS)


@dataclass(frozen=True)
class CvSpec:
    kind: str = "kfold"  # kfold | nested | loocv
    k: int = 5
    k_outer: int = 5
    k_inner: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("kfold", "nested", "loocv"):
            raise ValueError(f"unknown CV kind {self.kind!r}")
        if self.k < 2 or self.k_outer < 2 or self.k_inner < 2:
            raise ValueError("fold counts must be >= 2")


def kfold_split(n: int, k: int, seed: int, labels=None) -> list[np.ndarray]:
    """Shuffled k-fold index sets, stratified by class when labels are given.

    Fold sizes differ by at most one; with labels, each class is dealt
    round-robin across folds after a per-class shuffle.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    if labels is None:
        return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]
    labels = np.asarray(labels)
    if labels.size != n:
        raise ValueError("labels length differs from n")
    dealt = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[dealt] = np.arange(n) % k
    return [np.flatnonzero(fold_of == f) for f in range(k)]


def _complement(n, idx):
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    return np.flatnonzero(mask)


def _better(score, params, best_score, best_params):
    """Higher score wins; exact ties go to smaller C, then smaller gamma."""
    if best_params is None or score > best_score + _TIE:
        return True
    return abs(score - best_score) <= _TIE and params < best_params


@dataclass
class GridRound:
    grid: Grid
    scores: dict          # (C, gamma) -> mean validation accuracy
    best: tuple
    best_score: float
    validation: EvaluationReport  # pooled out-of-fold predictions of the best combination
    n_fits: int
    kind: str = "kfold"
    outer: dict = field(default_factory=dict)  # nested only: per-fold params and scores

    def to_dict(self):
        return {
            "kind": self.kind,
            "c_values": list(self.grid.c_values),
            "gamma_values": list(self.grid.gamma_values),
            "scores": [[c, g, s] for (c, g), s in sorted(self.scores.items())],
            "best": list(self.best),
            "best_score": self.best_score,
            "validation": self.validation.to_dict(),
            "n_fits": self.n_fits,
            "outer": self.outer,
        }


def cross_val_predict(X, y, folds, train_fn, C, gamma):
    pred = np.empty_like(np.asarray(y))
    accs = []
    for f in folds:
        tr = _complement(y.size, f)
        model = train_fn(X[tr], y[tr], C, gamma)
        pred[f] = model.predict(X[f])
        accs.append(float(np.mean(pred[f] == y[f])))
    return pred, float(np.mean(accs))


def grid_search(grid: Grid, X, y, k: int, seed: int, train_fn) -> GridRound:
    """Mean k-fold accuracy for every (C, gamma); the best is the argmax."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    folds = kfold_split(y.size, k, seed, labels=y)
    scores, preds = {}, {}
    best, best_score, fits = None, -np.inf, 0
    for params in grid.combinations():
        try:
            pred, score = cross_val_predict(X, y, folds, train_fn, *params)
        except Exception as exc:
            raise RuntimeError(f"grid search failed at C={params[0]}, gamma={params[1]}: {exc}") from exc
        fits += len(folds)
        scores[params] = score
        preds[params] = pred
        if _better(score, params, best_score, best):
            best, best_score = params, score
    report = EvaluationReport.from_predictions(y, preds[best], f"C={best[0]:g} gamma={best[1]:g}")
    return GridRound(grid, scores, best, best_score, report, fits)


@dataclass(frozen=True)
class ShrinkSpec:
    """Refinement schedule: round r spans best * (1 +/- rel_span * decay**(r-2))."""

    rel_span: float = 0.25
    decay: float = 0.5
    points: int = 3
    c_eps: float = 0.1
    gamma_eps: float = 0.02


def _bracket(best, rel, points):
    vals = best * (1.0 + rel * np.linspace(-1.0, 1.0, points))
    vals = sorted({round(float(v), 6) for v in vals if v > 0} | {round(float(best), 6)})
    return tuple(vals)


def refine_grid(best: tuple, round_number: int, spec: ShrinkSpec = ShrinkSpec()) -> Grid | None:
    """Tighter grid around the incumbent for round ``round_number`` (>= 2).

    Returns None once both axis spans fall below their epsilons.
    """
    C, gamma = best
    rel = spec.rel_span * spec.decay ** max(round_number - 2, 0)
    if 2 * rel * C < spec.c_eps and 2 * rel * gamma < spec.gamma_eps:
        return None
    return Grid(_bracket(C, rel, spec.points), _bracket(gamma, rel, spec.points))


def _mode_params(params_list):
    counts = Counter(params_list)
    top = max(counts.values())
    return min(p for p, c in counts.items() if c == top)


@dataclass
class NestedResult:
    best_params: list      # per outer fold
    outer_scores: list
    inner_scores: list     # best inner CV accuracy per outer fold
    mean_accuracy: float
    n_fits: int
    pooled: EvaluationReport

    @property
    def selected(self) -> tuple:
        """Most frequent per-fold choice; ties go to smaller C then gamma."""
        return _mode_params(self.best_params)


def nested_cv(X, y, grid: Grid, k_outer: int, k_inner: int, seed: int, train_fn) -> NestedResult:
    """Inner grid search on each outer-training split, scored on the outer fold."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if k_outer * k_inner > y.size:
        raise ValueError(f"k_outer*k_inner = {k_outer * k_inner} exceeds {y.size} samples")
    outer = kfold_split(y.size, k_outer, seed, labels=y)
    pred = np.empty_like(y)
    params, outer_scores, inner_scores, fits = [], [], [], 0
    for i, f in enumerate(outer):
        tr = _complement(y.size, f)
        inner = grid_search(grid, X[tr], y[tr], k_inner, seed + 1 + i, train_fn)
        fits += inner.n_fits
        model = train_fn(X[tr], y[tr], *inner.best)
        fits += 1
        pred[f] = model.predict(X[f])
        params.append(inner.best)
        outer_scores.append(float(np.mean(pred[f] == y[f])))
        inner_scores.append(inner.best_score)
    return NestedResult(params, outer_scores, inner_scores, float(np.mean(outer_scores)), fits,
                        EvaluationReport.from_predictions(y, pred, "nested"))


def nested_round(grid: Grid, X, y, k_outer: int, k_inner: int, seed: int, train_fn) -> GridRound:
    res = nested_cv(X, y, grid, k_outer, k_inner, seed, train_fn)
    sel = res.selected
    scores = {}
    for p, s in zip(res.best_params, res.outer_scores):
        scores.setdefault(p, []).append(s)
    outer = {"params": [list(p) for p in res.best_params], "outer_scores": res.outer_scores,
             "inner_scores": res.inner_scores}
    return GridRound(grid, {p: float(np.mean(s)) for p, s in scores.items()}, sel, res.mean_accuracy,
                     res.pooled, res.n_fits, "nested", outer)


def loocv(X, y, train_fn, C=None, gamma=None):
    """Leave-one-out accuracy; returns (accuracy, n_fits)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = y.size
    if n < 2:
        raise ValueError("LOOCV needs at least 2 samples")
    correct = 0
    for i in range(n):
        tr = _complement(n, [i])
        model = train_fn(X[tr], y[tr], C, gamma)
        correct += int(model.predict(X[i:i + 1])[0] == y[i])
    return correct / n, n


@dataclass
class GridLedger:
    rounds: list = field(default_factory=list)
    title: str = ""

    @property
    def total_fits(self):
        return sum(r.n_fits for r in self.rounds)

    def to_dict(self):
        return {"title": self.title, "rounds": [r.to_dict() for r in self.rounds]}

    def report(self) -> str:
        lines = [self.title or "Grid search", "Round  Scope of C  |  Scope of gamma  |  Better parameters"]
        for i, r in enumerate(self.rounds, 1):
            star = "*" if r.kind == "nested" else ""
            cs = ", ".join(f"{v:g}" for v in r.grid.c_values)
            gs = ", ".join(f"{v:g}" for v in r.grid.gamma_values)
            lines.append(f"{i}{star}  [{cs}]  |  [{gs}]  |  C = {r.best[0]:g}, gamma = {r.best[1]:g}")
            for row in r.validation.table().splitlines():
                lines.append("      " + row)
            lines.append(f"      CV accuracy {r.best_score:.3f}  ({r.n_fits} fits)")
        return "\n".join(lines)


def run_search(X, y, n_rounds: int, seed: int, train_fn, cv: str = "kfold", k: int = 5,
               k_outer: int = 5, k_inner: int = 5, first: Grid | None = None,
               shrink: ShrinkSpec = ShrinkSpec(), title: str = "") -> GridLedger:
    """Iterated search: round 1 on ``first``, later rounds on refined grids.

    Once refinement reports convergence the remaining rounds re-run the
    incumbent as a singleton grid, so the ledger always has ``n_rounds`` rounds.
    """
    ledger = GridLedger(title=title)
    grid = first or round1_grid()
    for r in range(1, n_rounds + 1):
        if r > 1:
            grid = refine_grid(ledger.rounds[-1].best, r, shrink) or Grid.singleton(*ledger.rounds[-1].best)
        if cv == "nested":
            rnd = nested_round(grid, X, y, k_outer, k_inner, seed + 97 * r, train_fn)
        else:
            rnd = grid_search(grid, X, y, k, seed + 97 * r, train_fn)
            rnd.kind = "kfold"
        ledger.rounds.append(rnd)
    return ledger
