"""Classifiers: a small from-scratch MLP (the pipeline's workhorse) plus KNN
and decision-tree baselines for the classifier-selection experiment.

The MLP is fixed at one hidden layer of 10 logistic-sigmoid units and a
4-way softmax output, trained with SGD + momentum on softmax cross-entropy.
Features are z-scored per column with training statistics stored on the
model, so prediction is self-contained.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, NumericError
from .metrics import N_CLASSES, cross_entropy

HIDDEN_UNITS = 10
MLP_MAGIC = b"MLPMDL1\x00"


@dataclass
class TrainConfig:
    lr: float = 0.001
    momentum: float = 0.95
    max_epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.lr <= 0:
            raise InputError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError(f"momentum must be in [0,1), got {self.momentum}")
        # max_epochs 0 is the documented no-train edge: the returned model is
        # the seeded initialization with evaluated losses.
        if self.max_epochs < 0:
            raise InputError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class MlpModel:
    W1: np.ndarray  # 10 x d
    b1: np.ndarray  # 10
    W2: np.ndarray  # 4 x 10
    b2: np.ndarray  # 4
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    train_trace: list = field(default_factory=list)  # (train_loss, val_loss) per epoch
    best_epoch: int = -1

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def _init_model(d: int, rng: np.random.Generator) -> MlpModel:
    def glorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return MlpModel(
        W1=glorot(HIDDEN_UNITS, d),
        b1=np.zeros(HIDDEN_UNITS),
        W2=glorot(N_CLASSES, HIDDEN_UNITS),
        b2=np.zeros(N_CLASSES),
        feat_mean=np.zeros(d),
        feat_scale=np.ones(d),
    )


def _standardize(model: MlpModel, X: np.ndarray) -> np.ndarray:
    return (X - model.feat_mean) / model.feat_scale


def _forward(model: MlpModel, Xs: np.ndarray):
    hidden = _sigmoid(Xs @ model.W1.T + model.b1)
    probs = _softmax(hidden @ model.W2.T + model.b2)
    return hidden, probs


def mlp_predict_proba(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Class probabilities; each row sums to 1, entries strictly in (0,1)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InputError(
            f"width mismatch: X has {X.shape[1] if X.ndim == 2 else '?'} cols, "
            f"model expects {model.input_dim}"
        )
    _, probs = _forward(model, _standardize(model, X))
    return probs


def mlp_gradient(model: MlpModel, X: np.ndarray, y: np.ndarray) -> dict:
    """Analytic gradient of mean softmax cross-entropy w.r.t. all parameters.

    X is taken as already standardized model input (training works in
    standardized space); shapes mirror the weight arrays.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n = X.shape[0]
    hidden, probs = _forward(model, X)
    delta2 = probs.copy()
    delta2[np.arange(n), y] -= 1.0
    delta2 /= n
    dW2 = delta2.T @ hidden
    db2 = delta2.sum(axis=0)
    delta1 = (delta2 @ model.W2) * hidden * (1.0 - hidden)
    dW1 = delta1.T @ X
    db1 = delta1.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def _loss_on(model: MlpModel, Xs: np.ndarray, y: np.ndarray) -> float:
    _, probs = _forward(model, Xs)
    return cross_entropy(y, probs)


def mlp_train(X_train, y_train, X_val, y_val, cfg: TrainConfig) -> MlpModel:
    """SGD + momentum training; returns the epoch snapshot with best val loss.

    Deterministic under cfg.seed: init, standardization, and batch order all
    derive from one seeded generator.
    """
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=int)
    X_val = np.asarray(X_val, dtype=float)
    y_val = np.asarray(y_val, dtype=int)
    if X_train.shape[0] == 0:
        raise InputError("empty training set")
    if X_val.shape[0] == 0:
        raise InputError("empty validation set")
    if not np.all(np.isfinite(X_train)) or not np.all(np.isfinite(X_val)):
        raise InputError("non-finite values in training input")
    if y_train.min() < 0 or y_train.max() >= N_CLASSES:
        raise InputError("labels outside 0..3")

    rng = np.random.default_rng(cfg.seed)
    model = _init_model(X_train.shape[1], rng)
    model.feat_mean = X_train.mean(axis=0)
    scale = X_train.std(axis=0)
    scale[scale == 0] = 1.0
    model.feat_scale = scale

    Xs = _standardize(model, X_train)
    Xv = _standardize(model, X_val)
    n = Xs.shape[0]

    velocity = {k: np.zeros_like(getattr(model, k)) for k in ("W1", "b1", "W2", "b2")}
    best = {k: getattr(model, k).copy() for k in ("W1", "b1", "W2", "b2")}
    best_val = _loss_on(model, Xv, y_val)
    best_epoch = -1
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = mlp_gradient(model, Xs[batch], y_train[batch])
            for key, grad in grads.items():
                velocity[key] = cfg.momentum * velocity[key] + grad
                getattr(model, key)[...] -= cfg.lr * velocity[key]
        try:
            train_loss = _loss_on(model, Xs, y_train)
            val_loss = _loss_on(model, Xv, y_val)
        except NumericError as exc:
            raise NumericError(f"NaN loss at epoch {epoch}") from exc
        if not np.isfinite(train_loss) or not np.isfinite(val_loss):
            raise NumericError(f"NaN loss at epoch {epoch}")
        model.train_trace.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best = {k: getattr(model, k).copy() for k in ("W1", "b1", "W2", "b2")}
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break

    for key, value in best.items():
        setattr(model, key, value)
    model.best_epoch = best_epoch
    return model


def knn_predict(X_train, y_train, X, k: int) -> np.ndarray:
    """Neighbor-class fractions over the k nearest training rows (Euclidean).

    Distance ties are resolved by training index, so results are deterministic.
    """
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=int)
    X = np.asarray(X, dtype=float)
    n = X_train.shape[0]
    if k < 1 or k > n:
        raise InputError(f"k={k} outside 1..{n}")
    probs = np.empty((X.shape[0], N_CLASSES))
    for i, row in enumerate(X):
        d2 = ((X_train - row) ** 2).sum(axis=1)
        nearest = np.argsort(d2, kind="stable")[:k]
        counts = np.bincount(y_train[nearest], minlength=N_CLASSES)
        probs[i] = counts / k
    return probs


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    probs: np.ndarray | None = None  # set on leaves


@dataclass
class TreeModel:
    root: TreeNode
    max_depth: int


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


def _best_split(X, y, feature_order):
    n = len(y)
    parent_counts = np.bincount(y, minlength=N_CLASSES)
    best = None
    for feat in feature_order:
        values = X[:, feat]
        order = np.argsort(values, kind="stable")
        sorted_vals = values[order]
        sorted_y = y[order]
        left_counts = np.zeros(N_CLASSES)
        right_counts = parent_counts.astype(float).copy()
        for i in range(n - 1):
            left_counts[sorted_y[i]] += 1
            right_counts[sorted_y[i]] -= 1
            if sorted_vals[i] == sorted_vals[i + 1]:
                continue
            n_left = i + 1
            impurity = (
                n_left * _gini(left_counts) + (n - n_left) * _gini(right_counts)
            ) / n
            if best is None or impurity < best[0] - 1e-15:
                threshold = 0.5 * (sorted_vals[i] + sorted_vals[i + 1])
                best = (impurity, feat, threshold)
    return best


def tree_train(X, y, max_depth: int = 12, min_samples_split: int = 2) -> TreeModel:
    """CART with Gini impurity; leaves store class frequencies."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if max_depth < 1:
        raise InputError(f"max_depth must be >= 1, got {max_depth}")
    if X.shape[0] == 0:
        raise InputError("empty training set")
    feature_order = range(X.shape[1])

    def grow(idx, depth):
        counts = np.bincount(y[idx], minlength=N_CLASSES)
        node = TreeNode()
        if (
            depth >= max_depth
            or len(idx) < min_samples_split
            or _gini(counts) == 0.0
        ):
            node.probs = counts / counts.sum()
            return node
        split = _best_split(X[idx], y[idx], feature_order)
        if split is None:
            node.probs = counts / counts.sum()
            return node
        _, feat, threshold = split
        mask = X[idx, feat] <= threshold
        node.feature = feat
        node.threshold = threshold
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    return TreeModel(root=grow(np.arange(len(y)), 0), max_depth=max_depth)


def tree_predict(model: TreeModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    probs = np.empty((X.shape[0], N_CLASSES))
    for i, row in enumerate(X):
        node = model.root
        while node.probs is None:
            node = node.left if row[node.feature] <= node.threshold else node.right
        probs[i] = node.probs
    return probs


def save_mlp(model: MlpModel, path) -> None:
    """Model file: magic, layer dims, then weights and feature stats as f64 LE."""
    d = model.input_dim
    with open(path, "wb") as fh:
        fh.write(MLP_MAGIC)
        fh.write(struct.pack("<III", d, HIDDEN_UNITS, N_CLASSES))
        for arr in (
            model.W1,
            model.b1,
            model.W2,
            model.b2,
            model.feat_mean,
            model.feat_scale,
        ):
            fh.write(np.asarray(arr, dtype="<f8").tobytes(order="C"))


def load_mlp(path) -> MlpModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MLP_MAGIC:
        raise InputError(f"{path}: bad model magic")
    d, hidden, classes = struct.unpack_from("<III", blob, 8)
    if hidden != HIDDEN_UNITS or classes != N_CLASSES:
        raise InputError(f"{path}: unexpected layer dims {hidden}/{classes}")
    sizes = [hidden * d, hidden, classes * hidden, classes, d, d]
    expected = 20 + 8 * sum(sizes)
    if len(blob) != expected:
        raise InputError(f"{path}: expected {expected} bytes, found {len(blob)}")
    off = 20
    arrays = []
    for count in sizes:
        arrays.append(np.frombuffer(blob, "<f8", count=count, offset=off).copy())
        off += 8 * count
    return MlpModel(
        W1=arrays[0].reshape(hidden, d),
        b1=arrays[1],
        W2=arrays[2].reshape(classes, hidden),
        b2=arrays[3],
        feat_mean=arrays[4],
        feat_scale=arrays[5],
    )


def cv_probabilities(X, y, fold_assignment, cfg: TrainConfig, val_fraction=0.15):
    """Out-of-fold MLP probabilities under a shared fold assignment.

    For each fold: train on the remaining folds (with a stratified validation
    carve-out for early stopping), predict the held-out fold. Returns an n x 4
    matrix aligned with the input rows.
    """
    from .dataset import make_splits  # local import to avoid a cycle

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    folds = np.asarray(fold_assignment, dtype=int)
    probs = np.zeros((X.shape[0], N_CLASSES))
    for j in sorted(set(folds.tolist())):
        test_mask = folds == j
        train_idx = np.flatnonzero(~test_mask)
        carve = make_splits(
            len(train_idx),
            y[train_idx],
            (1.0 - val_fraction, val_fraction / 2, val_fraction / 2),
            seed=cfg.seed + j,
        )
        tr = train_idx[carve.assignment == 0]
        va = train_idx[carve.assignment != 0]
        model = mlp_train(X[tr], y[tr], X[va], y[va], replace(cfg, seed=cfg.seed + j))
        probs[test_mask] = mlp_predict_proba(model, X[test_mask])
    return probs


def classifier_selection(descriptor_matrices, labels, classifiers, folds=2, seed=0):
    """Mean 2-fold CV cross-entropy per (descriptor, classifier) cell.

    `descriptor_matrices` maps descriptor name -> feature matrix;
    `classifiers` maps classifier name -> callable(X_tr, y_tr, X_te) -> probs.
    Returns (row_names, col_names, loss_table).
    """
    from .dataset import make_folds

    if len(descriptor_matrices) < 2 or len(classifiers) < 2:
        raise InputError("need at least 2 descriptors and 2 classifiers")
    labels = np.asarray(labels, dtype=int)
    row_names = list(descriptor_matrices.keys())
    col_names = list(classifiers.keys())
    table = np.zeros((len(row_names), len(col_names)))
    fold_assignment = make_folds(len(labels), labels, folds, seed).assignment
    for i, desc in enumerate(row_names):
        X = np.asarray(descriptor_matrices[desc], dtype=float)
        for j, clf_name in enumerate(col_names):
            losses = []
            for fold in range(folds):
                test_mask = fold_assignment == fold
                try:
                    probs = classifiers[clf_name](
                        X[~test_mask], labels[~test_mask], X[test_mask]
                    )
                except Exception as exc:
                    raise NumericError(
                        f"classifier {clf_name!r} failed on descriptor {desc!r} "
                        f"fold {fold}: {exc}"
                    ) from exc
                losses.append(cross_entropy(labels[test_mask], probs))
            table[i, j] = float(np.mean(losses))
    return row_names, col_names, table
