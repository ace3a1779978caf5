"""Fusion strategies: the cascaded probability-pooling ensemble and the
feature-concatenation ensemble.

Pooling combines per-class probabilities from N models as a weighted
geometric opinion:

    pooled = prod(p_i^w_i) / (prod(p_i^w_i) + prod((1-p_i)^w_i))

evaluated in log space with entries clamped to [eps, 1-eps]. Pooled rows are
deliberately not renormalized across classes: they feed the next classifier
as features and its softmax renormalizes anyway.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import TrainConfig, cv_probabilities
from .dataset import make_folds
from .errors import InputError
from .featstore import FeatureMatrix
from .metrics import EvaluationReport, build_report

POOL_EPS = 1e-7


@dataclass
class ProbabilityMatrix:
    """n x 4 per-class scores with the producing model's name."""

    values: np.ndarray
    source_id: str


@dataclass
class EnsembleSpec:
    members: list
    weights: np.ndarray
    stage: str  # HCF | DEEP | COMBINED

    def __post_init__(self):
        if len(self.members) < 2:
            raise InputError("an ensemble needs at least 2 members")
        self.weights = np.asarray(self.weights, dtype=float)
        if (self.weights <= 0).any():
            raise InputError("ensemble weights must be positive")


def _values(member) -> np.ndarray:
    return member.values if hasattr(member, "values") else np.asarray(member, dtype=float)


def pool_probabilities(members, weights=None) -> np.ndarray:
    """Per-class independent log-space pooling of aligned score matrices.

    Weights default to 1/N and are normalized to sum to 1, which makes the
    pool idempotent on identical members. Output entries are in (0, 1).
    """
    mats = [np.asarray(_values(m), dtype=float) for m in members]
    if not mats:
        raise InputError("no members to pool")
    shape = mats[0].shape
    for i, mat in enumerate(mats):
        if mat.shape != shape:
            raise InputError(f"member {i} has shape {mat.shape}, expected {shape}")
        if not np.all(np.isfinite(mat)):
            r, c = np.argwhere(~np.isfinite(mat))[0]
            raise InputError(f"non-finite entry in member {i} at ({r}, {c})")
    if weights is None:
        weights = np.full(len(mats), 1.0 / len(mats))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(mats),):
        raise InputError("one weight per member required")
    if (weights <= 0).any():
        raise InputError("weights must be positive")
    weights = weights / weights.sum()

    log_p = np.zeros(shape)
    log_q = np.zeros(shape)
    for mat, w in zip(mats, weights):
        clamped = np.clip(mat, POOL_EPS, 1.0 - POOL_EPS)
        log_p += w * np.log(clamped)
        log_q += w * np.log1p(-clamped)
    # pooled = 1 / (1 + exp(log_q - log_p)), the stable sigmoid form
    diff = log_q - log_p
    out = np.empty(shape)
    pos = diff >= 0
    out[pos] = np.exp(-diff[pos]) / (1.0 + np.exp(-diff[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(diff[~pos]))
    return out


def ensemble_stage(members, labels, fold_assignment, cfg: TrainConfig, weights=None):
    """One cascade stage: pool the members, reclassify the pooled scores with
    an MLP under the shared fold assignment.

    Returns (report, pooled matrix, out-of-fold stage probabilities).
    """
    if len(members) < 2:
        raise InputError("a cascade stage needs at least 2 members")
    labels = np.asarray(labels, dtype=int)
    pooled = pool_probabilities(members, weights)
    stage_probs = cv_probabilities(pooled, labels, fold_assignment, cfg)
    report = _report_with_folds(labels, stage_probs, fold_assignment)
    return report, pooled, stage_probs


def _report_with_folds(labels, probs, fold_assignment) -> EvaluationReport:
    per_fold = []
    for j in sorted(set(np.asarray(fold_assignment).tolist())):
        mask = np.asarray(fold_assignment) == j
        per_fold.append(build_report(labels[mask], probs[mask]))
    return build_report(labels, probs, per_fold=per_fold)


@dataclass
class CascadeResult:
    hf_report: EvaluationReport
    deep_report: EvaluationReport
    combined_report: EvaluationReport
    stage_probs: dict = field(default_factory=dict)


def cascade_run(hcf_probs, dl_probs, labels, folds: int, cfg: TrainConfig,
                hcf_weights=None, dl_weights=None) -> CascadeResult:
    """The three-output cascade: pooled handcrafted members -> MLP, pooled deep
    members -> MLP, then the two stage-level pooled matrices pooled again with
    equal weights -> MLP. One fold assignment is shared by every stage so no
    stage sees test leakage. Member weights default to 1/N per stage."""
    labels = np.asarray(labels, dtype=int)
    for name, members in (("handcrafted", hcf_probs), ("deep", dl_probs)):
        if len(members) < 2:
            raise InputError(f"{name} stage needs at least 2 members")
    fold_assignment = make_folds(len(labels), labels, folds, cfg.seed).assignment

    hf_report, hf_pooled, hf_stage = ensemble_stage(
        hcf_probs, labels, fold_assignment, cfg, weights=hcf_weights
    )
    deep_report, dl_pooled, dl_stage = ensemble_stage(
        dl_probs, labels, fold_assignment, replace(cfg, seed=cfg.seed + 1), weights=dl_weights
    )
    combined_report, _, combined_stage = ensemble_stage(
        [hf_pooled, dl_pooled],
        labels,
        fold_assignment,
        replace(cfg, seed=cfg.seed + 2),
        weights=(0.5, 0.5),
    )
    return CascadeResult(
        hf_report=hf_report,
        deep_report=deep_report,
        combined_report=combined_report,
        stage_probs={
            "hf_ensemble": hf_stage,
            "deep_ensemble": dl_stage,
            "combined_ensemble": combined_stage,
        },
    )


def member_cv_probabilities(values, labels, fold_assignment, cfg: TrainConfig, pca_kind=None):
    """Out-of-fold MLP probabilities for one feature matrix, with optional
    per-fold PCA (fit strictly on each fold's training rows)."""
    from .classify import mlp_predict_proba, mlp_train
    from .dataset import make_splits
    from .reduction import k_policy, pca_fit, pca_transform

    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels, dtype=int)
    folds = np.asarray(fold_assignment, dtype=int)
    probs = np.zeros((values.shape[0], 4))
    for j in sorted(set(folds.tolist())):
        test_mask = folds == j
        X_train, X_test = values[~test_mask], values[test_mask]
        if pca_kind is not None:
            model = pca_fit(X_train, k_policy(pca_kind, values.shape[1]))
            X_train = pca_transform(model, X_train)
            X_test = pca_transform(model, X_test)
        y_fold = labels[~test_mask]
        carve = make_splits(len(y_fold), y_fold, (0.85, 0.075, 0.075), seed=cfg.seed + j)
        tr = carve.assignment == 0
        mlp = mlp_train(
            X_train[tr], y_fold[tr], X_train[~tr], y_fold[~tr], replace(cfg, seed=cfg.seed + j)
        )
        probs[test_mask] = mlp_predict_proba(mlp, X_test)
    return probs


def concat_features(matrices) -> FeatureMatrix:
    """Column-wise concatenation of aligned feature matrices; provenance of
    each member (source, width) is retained."""
    if not matrices:
        raise InputError("nothing to concatenate")
    mats = [(m.source_id, _values(m)) if hasattr(m, "values") else ("", _values(m)) for m in matrices]
    rows = mats[0][1].shape[0]
    for name, values in mats:
        if values.shape[0] != rows:
            raise InputError(
                f"row mismatch: {name or 'matrix'} has {values.shape[0]} rows, expected {rows}"
            )
    return FeatureMatrix(
        values=np.hstack([values for _, values in mats]),
        source_id="+".join(name for name, _ in mats),
        members=tuple((name, values.shape[1]) for name, values in mats),
    )


def concat_run(named_matrices, labels, pca_kinds, folds: int, cfg: TrainConfig):
    """Feature-concatenation ensemble: optional per-member PCA (fit on the
    training rows of each fold), concatenate, train the MLP fold-wise.

    `named_matrices` is an ordered list of (name, matrix); `pca_kinds` maps a
    member name to its PCA policy kind ("handcrafted"/"deep") or is None to
    skip reduction. Returns (EvaluationReport, feature width).
    """
    from .classify import mlp_predict_proba, mlp_train
    from .dataset import make_splits
    from .reduction import k_policy, pca_fit, pca_transform

    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    for name, matrix in named_matrices:
        if _values(matrix).shape[0] != n:
            raise InputError(f"member {name!r} rows != {n} labels")
    fold_assignment = make_folds(n, labels, folds, cfg.seed).assignment
    probs = np.zeros((n, 4))
    width = None
    for j in range(folds):
        test_mask = fold_assignment == j
        blocks_train, blocks_test = [], []
        for name, matrix in named_matrices:
            values = _values(matrix)
            if pca_kinds is not None:
                kind = pca_kinds[name]
                model = pca_fit(values[~test_mask], k_policy(kind, values.shape[1]))
                blocks_train.append(pca_transform(model, values[~test_mask]))
                blocks_test.append(pca_transform(model, values[test_mask]))
            else:
                blocks_train.append(values[~test_mask])
                blocks_test.append(values[test_mask])
        X_train = np.hstack(blocks_train)
        X_test = np.hstack(blocks_test)
        width = X_train.shape[1]
        y_fold = labels[~test_mask]
        carve = make_splits(len(y_fold), y_fold, (0.85, 0.075, 0.075), seed=cfg.seed + j)
        tr = carve.assignment == 0
        model = mlp_train(
            X_train[tr], y_fold[tr], X_train[~tr], y_fold[~tr], replace(cfg, seed=cfg.seed + j)
        )
        probs[test_mask] = mlp_predict_proba(model, X_test)
    report = _report_with_folds(labels, probs, fold_assignment)
    return report, width


def probability_histograms(probs, labels, bins: int = 10):
    """Per true class, the histogram of the predicted probability for that
    class over [0, 1]; bins are left-closed with the last bin closed.

    Returns (edges, counts matrix of shape n_classes x bins).
    """
    if bins < 2:
        raise InputError(f"bins must be >= 2, got {bins}")
    probs = np.asarray(_values(probs), dtype=float)
    labels = np.asarray(labels, dtype=int)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = np.zeros((probs.shape[1], bins), dtype=int)
    for c in range(probs.shape[1]):
        mask = labels == c
        if mask.any():
            counts[c], _ = np.histogram(probs[mask, c], bins=edges)
    return edges, counts


def histogram_csv(edges, counts) -> str:
    lines = ["class,bin_low,bin_high,count"]
    for c in range(counts.shape[0]):
        for b in range(counts.shape[1]):
            lines.append(f"{c},{edges[b]:.6f},{edges[b + 1]:.6f},{counts[c, b]}")
    return "\n".join(lines) + "\n"


def load_ensemble_config(path) -> dict:
    """Declarative cascade/concat run config: members, weights, folds, seed."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return data
