"""RBF-kernel support vector machines trained with SMO, one-vs-one for three classes."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numba import njit

TAU = 1e-12


@dataclass(frozen=True)
class SvmHyper:
    C: float
    gamma: float

    def __post_init__(self):
        if not (self.C > 0 and self.gamma > 0):
            raise ValueError(f"C and gamma must be positive, got C={self.C}, gamma={self.gamma}")


def rbf_kernel(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def sq_distances(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def rbf_gram(A, B, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_distances(A, B))


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, eps: float = 1e-5, max_iter: int = 100_000):
    """Minimise 0.5 a'Qa - sum(a) s.t. 0 <= a <= C, y'a = 0 with Q = (yy')*K.

    Working pairs are the maximal violating pair. Returns (alpha, rho, iterations)
    where the decision function is sum(alpha*y*K) - rho.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha, G, it = _smo_loop(K, y, float(C), float(eps), int(max_iter))
    return alpha, _rho(alpha, G, y, C), it


@njit(cache=True)
def _smo_loop(K, y, C, eps, max_iter):
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        it += 1
        i = -1
        j = -1
        g_max = -np.inf
        g_min = np.inf
        for t in range(n):
            v = -y[t] * G[t]
            if y[t] > 0:
                if alpha[t] < C and v > g_max:
                    g_max, i = v, t
                if alpha[t] > 0 and v < g_min:
                    g_min, j = v, t
            else:
                if alpha[t] > 0 and v > g_max:
                    g_max, i = v, t
                if alpha[t] < C and v < g_min:
                    g_min, j = v, t
        if i < 0 or j < 0 or g_max - g_min < eps:
            break
        ai = alpha[i]
        aj = alpha[j]
        qii = K[i, i]
        qjj = K[j, j]
        qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = max(qii + qjj + 2.0 * qij, TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            elif ni < 0:
                ni = 0.0
                nj = -diff
            if diff > 0:
                if ni > C:
                    ni = C
                    nj = C - diff
            elif nj > C:
                nj = C
                ni = C + diff
        else:
            quad = max(qii + qjj - 2.0 * qij, TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni = ai - delta
            nj = aj + delta
            if total > C:
                if ni > C:
                    ni = C
                    nj = total - C
            elif nj < 0:
                nj = 0.0
                ni = total
            if total > C:
                if nj > C:
                    nj = C
                    ni = total - C
            elif ni < 0:
                ni = 0.0
                nj = total
        di = ni - ai
        dj = nj - aj
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * di + y[j] * K[t, j] * dj)
        alpha[i] = ni
        alpha[j] = nj
    return alpha, G, it


def _rho(alpha, G, y, C):
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def dual_objective(alpha, K, y) -> float:
    """Dual objective sum(a) - 0.5 a'Qa (to be maximised)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


@dataclass
class BinaryMachine:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    alpha: np.ndarray | None = field(default=None, repr=False)  # full training duals, not persisted

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}")
        return rbf_gram(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def to_dict(self):
        return {"sv": self.support_vectors, "coef": self.dual_coef, "bias": self.bias, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["sv"], dtype=np.float64), np.asarray(d["coef"]),
                   float(d["bias"]), float(d["gamma"]))


def svm_train(X, y, h: SvmHyper, eps: float = 1e-5, gram: np.ndarray | None = None) -> BinaryMachine:
    """Binary soft-margin RBF SVM; labels must be +1/-1 with both present."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("svm_train needs both +1 and -1 labels")
    K = rbf_gram(X, X, h.gamma) if gram is None else gram
    alpha, rho, _ = smo_solve(K, y, h.C, eps)
    sv = alpha > 0
    return BinaryMachine(X[sv].copy(), (alpha * y)[sv], -rho, h.gamma, alpha)


def kkt_violation(machine: BinaryMachine, X, y, C: float) -> float:
    """Largest violation of the soft-margin KKT conditions on the training set."""
    y = np.asarray(y, dtype=np.float64)
    margin = y * machine.decision(X)
    a = machine.alpha
    worst = 0.0
    if np.any(a <= 0):
        worst = max(worst, float(np.max(1.0 - margin[a <= 0], initial=0.0)))
    free = (a > 0) & (a < C)
    if np.any(free):
        worst = max(worst, float(np.max(np.abs(margin[free] - 1.0))))
    if np.any(a >= C):
        worst = max(worst, float(np.max(margin[a >= C] - 1.0, initial=0.0)))
    return worst


@dataclass
class SvmModel:
    """One-vs-one ensemble of binary machines over the classes seen in training."""

    classes: np.ndarray
    machines: dict  # (a, b) -> BinaryMachine; class a is the +1 side
    hyper: SvmHyper
    train_hash: str = ""

    @property
    def n_features(self) -> int:
        return next(iter(self.machines.values())).support_vectors.shape[1]

    def decisions(self, X) -> dict:
        return {pair: m.decision(X) for pair, m in self.machines.items()}

    def scores(self, X) -> np.ndarray:
        """Per-class sum of signed decision values of the machines involving that class."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros((X.shape[0], self.classes.size))
        index = {int(c): k for k, c in enumerate(self.classes)}
        for (a, b), f in self.decisions(X).items():
            out[:, index[a]] += f
            out[:, index[b]] -= f
        return out

    def predict(self, X) -> np.ndarray:
        """Majority vote; ties go to the class with the largest summed |decision| among its votes."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n, k = X.shape[0], self.classes.size
        votes = np.zeros((n, k))
        strength = np.zeros((n, k))
        index = {int(c): i for i, c in enumerate(self.classes)}
        for (a, b), f in self.decisions(X).items():
            winner = np.where(f > 0, index[a], index[b])
            votes[np.arange(n), winner] += 1
            strength[np.arange(n), winner] += np.abs(f)
        top = votes == votes.max(axis=1, keepdims=True)
        return self.classes[np.argmax(np.where(top, strength, -np.inf), axis=1)]

    def to_dict(self):
        return {
            "classes": self.classes.astype(np.int64),
            "C": self.hyper.C,
            "gamma": self.hyper.gamma,
            "train_hash": self.train_hash,
            "machines": [{"pair": [int(a), int(b)], **m.to_dict()} for (a, b), m in sorted(self.machines.items())],
        }

    @classmethod
    def from_dict(cls, d):
        machines = {tuple(md["pair"]): BinaryMachine.from_dict(md) for md in d["machines"]}
        return cls(np.asarray(d["classes"]), machines, SvmHyper(float(d["C"]), float(d["gamma"])), d["train_hash"])


def svm_train_multiclass(X, y, h: SvmHyper, eps: float = 1e-5, gram: np.ndarray | None = None,
                         require_classes=(0, 1, 2)) -> SvmModel:
    """Train the pairwise machines; ``gram`` optionally supplies the full RBF Gram matrix of X."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if require_classes is not None:
        missing = sorted(set(require_classes) - set(classes.tolist()))
        if missing:
            raise ValueError(f"training data lacks classes {missing}")
    if gram is None:
        gram = rbf_gram(X, X, h.gamma)
    machines = {}
    for a, b in combinations(classes.tolist(), 2):
        rows = np.flatnonzero((y == a) | (y == b))
        yy = np.where(y[rows] == a, 1.0, -1.0)
        machines[(int(a), int(b))] = svm_train(X[rows], yy, h, eps, gram[np.ix_(rows, rows)])
    return SvmModel(classes, machines, h)
