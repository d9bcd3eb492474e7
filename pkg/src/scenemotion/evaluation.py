"""Confusion matrices, one-vs-rest precision/recall/F1, accuracy and text reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Emotion

CLASS_ORDER = (Emotion.GOOD, Emotion.NEUTRAL, Emotion.BAD)  # row order of the printed tables


def confusion_matrix(y_true, y_pred, n_classes: int = 3) -> np.ndarray:
    """cm[t, p] counts samples of true class t predicted as p."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValueError("no samples")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _ratio(a, b):
    return a / b if b > 0 else 0.0


def precision_recall_f1(cm, c: int):
    """One-vs-rest metrics for class ``c``; any 0/0 is reported as 0."""
    cm = np.asarray(cm)
    tp = cm[c, c]
    fp = cm[:, c].sum() - tp
    fn = cm[c, :].sum() - tp
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return float(p), float(r), float(f1_score(p, r))


def f1_score(p: float, r: float) -> float:
    return _ratio(2.0 * p * r, p + r)


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm) / total)


@dataclass
class EvaluationReport:
    cm: np.ndarray
    per_class: dict  # Emotion -> (P, R, F1)
    accuracy: float
    model_id: str = ""
    degenerate: list = field(default_factory=list)  # classes with a 0/0 metric

    @classmethod
    def from_predictions(cls, y_true, y_pred, model_id: str = "") -> "EvaluationReport":
        return cls.from_matrix(confusion_matrix(y_true, y_pred), model_id)

    @classmethod
    def from_matrix(cls, cm, model_id: str = "") -> "EvaluationReport":
        cm = np.asarray(cm, dtype=np.int64)
        per_class, degenerate = {}, []
        for e in Emotion:
            per_class[e] = precision_recall_f1(cm, int(e))
            tp = cm[e, e]
            if cm[:, e].sum() == 0 or cm[e, :].sum() == 0 or tp == 0:
                degenerate.append(e.tag)
        return cls(cm, per_class, accuracy(cm), model_id, degenerate)

    def table(self) -> str:
        lines = ["Emotion  Precision  Recall  F1"]
        for e in CLASS_ORDER:
            p, r, f = self.per_class[e]
            flag = "*" if e.tag in self.degenerate else ""
            lines.append(f"{e.tag[0].upper():<8} {p:>9.2f} {r:>7.2f} {f:>5.2f}{flag}")
        lines.append(f"Accuracy: {self.accuracy:.2f}")
        if self.degenerate:
            lines.append("* contains a 0/0 cell reported as 0")
        return "\n".join(lines)

    def matrix_text(self) -> str:
        head = "true\\pred " + " ".join(f"{e.tag[0].upper():>5}" for e in CLASS_ORDER)
        rows = [head]
        for t in CLASS_ORDER:
            rows.append(f"{t.tag[0].upper():<9} " + " ".join(f"{self.cm[t, p]:>5d}" for p in CLASS_ORDER))
        return "\n".join(rows)

    def __str__(self):
        title = f"Evaluation {self.model_id}".rstrip()
        return f"{title}\n{self.table()}\n\n{self.matrix_text()}"

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "accuracy": self.accuracy,
            "confusion_matrix": self.cm.tolist(),
            "per_class": {e.tag: {"precision": p, "recall": r, "f1": f} for e, (p, r, f) in self.per_class.items()},
            "degenerate": list(self.degenerate),
        }
