"""PCA feature selection: fit on training rows, project onto top-k directions.

Models are immutable once fitted; transform never refits, which is the
leakage guard for validation/test data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError

PCA_MAGIC = b"PCAMDL1\x00"

# Width policy: handcrafted descriptors keep at most 100 directions,
# deep feature blocks at most 1000.
K_HANDCRAFTED = 100
K_DEEP = 1000


def k_policy(kind: str, width: int) -> int:
    if kind == "handcrafted":
        return min(K_HANDCRAFTED, width)
    if kind == "deep":
        return min(K_DEEP, width)
    raise InputError(f"unknown PCA policy kind: {kind!r}")


@dataclass(frozen=True)
class PcaModel:
    """Mean vector plus top-k orthonormal directions (rows, decreasing variance)."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


def _complete_basis(components: list, d: int, k: int) -> list:
    """Extend a partial orthonormal set to k rows using canonical vectors."""
    basis = list(components)
    for i in range(d):
        if len(basis) >= k:
            break
        v = np.zeros(d)
        v[i] = 1.0
        for b in basis:
            v -= (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            basis.append(v / norm)
    if len(basis) < k:
        raise InputError(f"cannot build {k} orthonormal directions in {d}-dim space")
    return basis


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Deterministic sign: the largest-magnitude entry of each row is positive."""
    idx = np.abs(components).argmax(axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(X: np.ndarray, k: int) -> PcaModel:
    """Top-k principal directions of the sample covariance of mean-centered X.

    Uses a covariance eigendecomposition for wide-enough sample counts and the
    Gram-matrix route when n < d. Zero-variance data yields a valid model with
    zero explained variance.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError(f"expected 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite values in PCA input")
    if k < 1 or k > min(n - 1, d):
        raise InputError(f"k={k} outside 1..min(n-1, d)={min(n - 1, d)}")
    mean = X.mean(axis=0)
    Xc = X - mean

    if n >= d:
        cov = (Xc.T @ Xc) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1][:k]
        variance = np.maximum(eigvals[order], 0.0)
        components = eigvecs[:, order].T
    else:
        gram = (Xc @ Xc.T) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        rows = []
        variance_list = []
        for idx in order:
            if len(rows) >= k:
                break
            lam = eigvals[idx]
            if lam <= 1e-12:
                continue
            v = Xc.T @ eigvecs[:, idx]
            v /= np.sqrt(lam * (n - 1))
            rows.append(v)
            variance_list.append(lam)
        if len(rows) < k:
            rows = _complete_basis(rows, d, k)
            variance_list += [0.0] * (k - len(variance_list))
        components = np.vstack(rows[:k])
        variance = np.asarray(variance_list[:k])

    return PcaModel(
        mean=mean,
        components=_fix_signs(np.ascontiguousarray(components)),
        explained_variance=variance,
    )


def pca_transform(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Project rows of X onto the model's directions: (X - mean) @ components.T."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InputError(
            f"dimension mismatch: X has {X.shape[1] if X.ndim == 2 else '?'} cols, "
            f"model expects {model.input_dim}"
        )
    return (X - model.mean) @ model.components.T


def save_pca(model: PcaModel, path) -> None:
    """Binary sidecar: magic, k, d, then mean/components/variances as f64 LE."""
    with open(path, "wb") as fh:
        fh.write(PCA_MAGIC)
        fh.write(struct.pack("<II", model.k, model.input_dim))
        fh.write(model.mean.astype("<f8").tobytes())
        fh.write(model.components.astype("<f8").tobytes(order="C"))
        fh.write(model.explained_variance.astype("<f8").tobytes())


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != PCA_MAGIC:
        raise InputError(f"{path}: bad PCA sidecar magic")
    k, d = struct.unpack_from("<II", blob, 8)
    expected = 16 + 8 * (d + k * d + k)
    if len(blob) != expected:
        raise InputError(f"{path}: expected {expected} bytes, found {len(blob)}")
    off = 16
    mean = np.frombuffer(blob, "<f8", count=d, offset=off).copy()
    off += 8 * d
    components = np.frombuffer(blob, "<f8", count=k * d, offset=off).reshape(k, d).copy()
    off += 8 * k * d
    variance = np.frombuffer(blob, "<f8", count=k, offset=off).copy()
    return PcaModel(mean=mean, components=components, explained_variance=variance)
