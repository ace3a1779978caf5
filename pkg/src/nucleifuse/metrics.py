"""Evaluation metrics: macro precision/recall/F1, multiclass AUC, cross-entropy.

All probability-based metrics take an n x 4 score matrix; label metrics take
integer labels in 0..3. Loss is always mean per-sample natural-log
cross-entropy, so values are comparable across experiments in this package
(externally quoted losses may use other normalizations).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericError

N_CLASSES = 4
LOSS_CLAMP = 1e-12


def confusion(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Confusion matrix: entry (i, j) counts samples with true i predicted j."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise InputError("y_true and y_pred lengths differ")
    mat = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(mat, (y_true, y_pred), 1)
    return mat


def macro_prf(y_true, y_pred) -> tuple[float, float, float]:
    """Macro-averaged one-vs-rest precision/recall and F1 of the macro pair.

    Classes absent from y_true have undefined recall and are excluded from the
    averages (a warning is emitted). Per-class precision with no predicted
    samples is taken as 0. F1 = 2PR/(P+R) on the macro P and R, 0 when P+R=0.
    """
    y_true = np.asarray(y_true, dtype=int)
    if y_true.size == 0:
        raise InputError("empty input")
    return prf_from_confusion(confusion(y_true, y_pred))


def prf_from_confusion(mat: np.ndarray) -> tuple[float, float, float]:
    mat = np.asarray(mat, dtype=float)
    present = mat.sum(axis=1) > 0
    if not present.any():
        raise InputError("no class present in y_true")
    if not present.all():
        absent = np.flatnonzero(~present).tolist()
        warnings.warn(f"classes {absent} absent from y_true; excluded from macro averages")
    tp = np.diag(mat)
    predicted = mat.sum(axis=0)
    actual = mat.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class_p = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
        per_class_r = np.where(actual > 0, tp / np.maximum(actual, 1), 0.0)
    precision = float(per_class_p[present].mean())
    recall = float(per_class_r[present].mean())
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, float(f1)


def cross_entropy(y_true, probs) -> float:
    """Mean over samples of -ln p(true class), probabilities clamped below."""
    y_true = np.asarray(y_true, dtype=int)
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] != y_true.shape[0]:
        raise InputError("probs must be n x k aligned with y_true")
    if np.isnan(probs).any():
        raise NumericError("NaN in probability matrix")
    p_true = probs[np.arange(len(y_true)), y_true]
    p_true = np.clip(p_true, LOSS_CLAMP, 1.0)
    return float(-np.log(p_true).mean())


def _midranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean rank of their group."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def multiclass_auc(y_true, probs) -> float:
    """Macro-averaged one-vs-rest ROC AUC via the Mann-Whitney rank statistic.

    Ties in scores get midranks. A class with no positive (or no negative)
    samples is excluded from the average with a warning.
    """
    y_true = np.asarray(y_true, dtype=int)
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] != y_true.shape[0]:
        raise InputError("probs must be n x k aligned with y_true")
    aucs = []
    skipped = []
    for c in range(probs.shape[1]):
        pos = y_true == c
        n_pos = int(pos.sum())
        n_neg = len(y_true) - n_pos
        if n_pos == 0 or n_neg == 0:
            skipped.append(c)
            continue
        ranks = _midranks(probs[:, c])
        rank_sum = ranks[pos].sum()
        aucs.append((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
    if skipped:
        warnings.warn(f"classes {skipped} lack positives or negatives; excluded from AUC")
    if not aucs:
        raise InputError("no class has both positive and negative samples")
    return float(np.mean(aucs))


@dataclass
class EvaluationReport:
    """Scalar metrics plus the confusion matrix for one evaluation."""

    precision: float
    recall: float
    f1: float
    auc: float
    loss: float
    confusion: np.ndarray
    per_fold: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "loss": self.loss,
            "confusion": np.asarray(self.confusion, dtype=int).tolist(),
        }
        if self.per_fold:
            out["per_fold"] = [r.to_dict() for r in self.per_fold]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_row(self, method: str) -> str:
        return (
            f"{method},{self.precision:.6f},{self.recall:.6f},"
            f"{self.f1:.6f},{self.auc:.6f},{self.loss:.6f}"
        )


CSV_HEADER = "Method,Precision,Recall,F1,AUC,Loss"


def build_report(y_true, probs, per_fold=None) -> EvaluationReport:
    """Assemble an EvaluationReport from true labels and a score matrix."""
    y_true = np.asarray(y_true, dtype=int)
    probs = np.asarray(probs, dtype=float)
    y_pred = probs.argmax(axis=1)
    mat = confusion(y_true, y_pred)
    precision, recall, f1 = prf_from_confusion(mat)
    return EvaluationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        auc=multiclass_auc(y_true, probs),
        loss=cross_entropy(y_true, probs),
        confusion=mat,
        per_fold=list(per_fold) if per_fold else [],
    )


def validate_report_dict(data: dict) -> None:
    """Schema check for emitted report JSON; raises InputError on violation."""
    for key in ("precision", "recall", "f1", "auc", "loss", "confusion"):
        if key not in data:
            raise InputError(f"report missing field: {key}")
    for key in ("precision", "recall", "f1", "auc"):
        val = data[key]
        if not isinstance(val, (int, float)) or not 0.0 <= val <= 1.0:
            raise InputError(f"report field {key} outside [0,1]: {val}")
    if not isinstance(data["loss"], (int, float)) or data["loss"] < 0:
        raise InputError(f"report loss must be >= 0: {data['loss']}")
    mat = data["confusion"]
    if len(mat) != N_CLASSES or any(len(row) != N_CLASSES for row in mat):
        raise InputError("report confusion matrix must be 4x4")
    if any(cell < 0 or int(cell) != cell for row in mat for cell in row):
        raise InputError("report confusion entries must be non-negative integers")
    for sub in data.get("per_fold", []):
        validate_report_dict(sub)
