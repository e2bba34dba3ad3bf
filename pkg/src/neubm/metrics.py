"""Imbalance-aware evaluation: confusion matrices, the F1 family, per-class
precision/recall, imbalance ratio, and an RBF-kernel MMD diagnostic.

Zero-division convention: precision/recall/F1 are 0 whenever their
denominator vanishes (affects classes with no predictions or no support).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GraphValidationError, ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[t][p] = number of evaluated nodes with true class t predicted p."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    f1_macro: float
    f1_weighted: float
    f1_micro: float
    accuracy: float
    rho: float
    per_class: tuple[ClassScores, ...]

    def to_dict(self) -> dict:
        return {
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "f1_micro": self.f1_micro,
            "accuracy": self.accuracy,
            "rho": self.rho,
            "per_class": [
                {
                    "class": i,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for i, s in enumerate(self.per_class)
            ],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


def confusion(
    pred: np.ndarray,
    truth: np.ndarray,
    mask: np.ndarray | None = None,
    num_classes: int | None = None,
) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ShapeError(
            f"pred has shape {pred.shape}, truth has shape {truth.shape}"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ShapeError("mask length mismatch")
        pred, truth = pred[mask], truth[mask]
    if num_classes is None:
        num_classes = int(max(pred.max(initial=-1), truth.max(initial=-1))) + 1
        num_classes = max(num_classes, 1)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return ConfusionMatrix(counts=counts)


def f1_scores(cm: ConfusionMatrix, rho: float = float("nan")) -> MetricsReport:
    """Per-class P/R/F1 plus macro, support-weighted, and micro aggregates."""
    counts = cm.counts
    if counts.sum() == 0:
        raise GraphValidationError("metrics undefined for an empty confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    support = counts.sum(axis=1).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)

    total = counts.sum()
    accuracy = float(tp.sum() / total)
    per_class = tuple(
        ClassScores(float(p), float(r), float(f), int(s))
        for p, r, f, s in zip(precision, recall, f1, support)
    )
    return MetricsReport(
        f1_macro=float(f1.mean()),
        f1_weighted=float((f1 * support).sum() / support.sum()),
        f1_micro=accuracy,
        accuracy=accuracy,
        rho=rho,
        per_class=per_class,
    )


def evaluate(
    pred: np.ndarray,
    truth: np.ndarray,
    mask: np.ndarray | None = None,
    num_classes: int | None = None,
) -> MetricsReport:
    """confusion + f1_scores + imbalance ratio of the evaluated truth labels."""
    cm = confusion(pred, truth, mask=mask, num_classes=num_classes)
    truth_eval = np.asarray(truth)[np.asarray(mask, dtype=bool)] if mask is not None else truth
    return f1_scores(cm, rho=imbalance_ratio(truth_eval))


def imbalance_ratio(labels: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Largest class count over smallest class count among labeled nodes."""
    labels = np.asarray(labels, dtype=np.int64)
    if mask is not None:
        labels = labels[np.asarray(mask, dtype=bool)]
    labels = labels[labels >= 0]
    if labels.size == 0:
        raise GraphValidationError("imbalance ratio needs at least one labeled node")
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    return float(counts.max() / counts.min())


def mmd_rbf(x: np.ndarray, y: np.ndarray, bandwidth="median") -> float:
    """Biased (V-statistic) RBF-kernel MMD between two sample sets.

    k(a, b) = exp(-|a-b|^2 / (2 h^2)); h defaults to the median pairwise
    Euclidean distance over the pooled samples (1.0 when that median is 0).
    Returns sqrt(max(0, MMD^2)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ShapeError("sample dimensionality mismatch")
    if x.shape[1] == 0:
        raise ShapeError("zero-dimensional samples")
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ShapeError("need at least one sample on each side")

    if bandwidth == "median":
        pooled = np.concatenate([x, y], axis=0)
        sq = _sq_dists(pooled, pooled)
        iu = np.triu_indices(pooled.shape[0], k=1)
        h = float(np.sqrt(np.median(sq[iu]))) if iu[0].size else 0.0
        if h == 0.0:
            h = 1.0
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ShapeError("bandwidth must be positive")

    gamma = 1.0 / (2.0 * h * h)
    kxx = np.exp(-gamma * _sq_dists(x, x)).mean()
    kyy = np.exp(-gamma * _sq_dists(y, y)).mean()
    kxy = np.exp(-gamma * _sq_dists(x, y)).mean()
    return float(np.sqrt(max(0.0, kxx + kyy - 2.0 * kxy)))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
