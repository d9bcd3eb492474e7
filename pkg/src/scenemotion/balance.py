"""NearMiss undersampling down to the minority-class count."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BalanceReport:
    before: dict
    after: dict
    removed: dict = field(default_factory=dict)  # class -> removed row indices
    kept: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_dict(self):
        return {
            "before": {str(k): int(v) for k, v in self.before.items()},
            "after": {str(k): int(v) for k, v in self.after.items()},
            "removed": {str(k): [int(i) for i in v] for k, v in self.removed.items()},
        }

    def __str__(self):
        rows = [f"class {c}: {self.before[c]} -> {self.after[c]}" for c in sorted(self.before)]
        return "NearMiss balance\n" + "\n".join(rows)


def near_miss(X, y, n_neighbors: int = 3):
    """Undersample every majority class to the minority count.

    Each majority sample is scored by its mean distance to its ``n_neighbors``
    nearest minority samples; the closest ones are removed first (ties broken
    by row index). Returns the kept rows, their labels and a report.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ValueError("near_miss needs at least two classes")
    if np.any(counts == 0):
        raise ValueError("a class has zero samples")
    minority = classes[np.argmin(counts)]
    target = int(counts.min())
    mino = X[y == minority]
    k = min(n_neighbors, mino.shape[0])

    keep = np.ones(y.size, dtype=bool)
    removed = {}
    for c, cnt in zip(classes, counts):
        rows = np.flatnonzero(y == c)
        excess = int(cnt) - target
        if c == minority or excess == 0:
            removed[c.item()] = []
            continue
        d = np.sqrt(((X[rows, None, :] - mino[None, :, :]) ** 2).sum(axis=2))
        score = np.sort(d, axis=1)[:, :k].mean(axis=1)
        order = np.lexsort((rows, score))
        drop = np.sort(rows[order[:excess]])
        keep[drop] = False
        removed[c.item()] = drop.tolist()

    before = {c.item(): int(n) for c, n in zip(classes, counts)}
    after = {c.item(): int(np.sum(y[keep] == c)) for c in classes}
    return X[keep], y[keep], BalanceReport(before, after, removed, np.flatnonzero(keep))
