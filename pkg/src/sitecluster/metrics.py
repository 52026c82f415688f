"""External clustering metrics (ACC, NMI, ARI) and cluster-size entropy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError, LengthMismatch


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    nmi: float
    ari: float
    entropy: float
    loss: Optional[float]
    contingency: np.ndarray

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "nmi": self.nmi,
            "ari": self.ari,
            "entropy": self.entropy,
            "loss": self.loss,
            "contingency": self.contingency.tolist(),
        }


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise LengthMismatch(f"pred has {pred.size} labels, truth has {truth.size}")
    return pred, truth


def contingency_table(pred, truth) -> np.ndarray:
    """Counts with predicted clusters on rows and true classes on columns."""
    pred, truth = _pair(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1 if p.size else 0, t.max() + 1 if t.size else 0), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise InputError("cannot score an empty labeling")
    table = contingency_table(pred, truth)
    # Rectangular problems are solved directly; unmatched rows/columns act as zero padding.
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / pred.size


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information normalised by the geometric mean of the two entropies."""
    pred, truth = _pair(pred, truth)
    table = contingency_table(pred, truth).astype(np.float64)
    n = table.sum()
    h_pred = _entropy_from_counts(table.sum(axis=1))
    h_true = _entropy_from_counts(table.sum(axis=0))
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    return float(np.clip(mi / np.sqrt(h_pred * h_true), 0.0, 1.0))


def _pairs(counts) -> int:
    return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(counts))


def ari(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    table = contingency_table(pred, truth)
    # Integer pair counts with a single final division keep the result correctly rounded.
    index = _pairs(table)
    rows = _pairs(table.sum(axis=1))
    cols = _pairs(table.sum(axis=0))
    total = _pairs([pred.size])
    num = 2 * (index * total - rows * cols)
    den = (rows + cols) * total - 2 * rows * cols
    if den == 0:
        # Both partitions trivial (one block, or all singletons) and identical.
        return 1.0
    return num / den


def assignment_entropy(labels, k: int) -> float:
    """Shannon entropy (nats) of the cluster-size distribution."""
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        return 0.0
    return _entropy_from_counts(np.bincount(labels, minlength=k))


def evaluate(pred, truth, k: Optional[int] = None, loss: Optional[float] = None) -> MetricsReport:
    pred, truth = _pair(pred, truth)
    _, codes = np.unique(pred, return_inverse=True)
    k = k if k is not None else int(codes.max()) + 1
    return MetricsReport(
        acc=clustering_accuracy(pred, truth),
        nmi=nmi(pred, truth),
        ari=ari(pred, truth),
        entropy=assignment_entropy(codes, max(k, int(codes.max()) + 1)),
        loss=loss,
        contingency=contingency_table(pred, truth),
    )
