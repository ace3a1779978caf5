"""Bag of visual words: seeded k-means codebook over dense local gradient
descriptors, nearest-centre histogram encoding.

Local descriptors are 8-bin gradient-orientation histograms over a dense 3x3
grid of cells (9x9 on the 27x27 patch), computed per RGB channel and averaged,
giving 9 local descriptors per patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .base import axis_cells, gradient_fields, orientation_histogram

BOVW_CLUSTERS = 100
LOCAL_GRID = 3
LOCAL_DESC_DIM = 8
KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class BovwCodebook:
    """k-means centres (one row per visual word); fit on training-split
    patches only, which the orchestration layer is responsible for."""

    centers: np.ndarray
    seed: int


def local_descriptors(patch: np.ndarray) -> np.ndarray:
    """Dense 3x3 grid of 8-bin orientation histograms, channel-averaged: (9, 8)."""
    patch = np.asarray(patch, dtype=float)
    rows = axis_cells(patch.shape[0], LOCAL_GRID)
    cols = axis_cells(patch.shape[1], LOCAL_GRID)
    out = np.zeros((LOCAL_GRID * LOCAL_GRID, LOCAL_DESC_DIM))
    for ch in range(3):
        mag, bins = gradient_fields(patch[:, :, ch])
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                out[i * LOCAL_GRID + j] += orientation_histogram(
                    mag[r0:r1, c0:c1], bins[r0:r1, c0:c1]
                )
    return out / 3.0


def _pairwise_sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    sq = (points**2).sum(axis=1)[:, None] + (centers**2).sum(axis=1)[None, :]
    sq -= 2.0 * points @ centers.T
    return np.maximum(sq, 0.0)


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER):
    """Seeded Lloyd's algorithm with k-means++ initialization.

    Ties in assignment go to the lowest-index centre; empty clusters are
    re-seeded with the point farthest from its assigned centre.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k > n:
        raise InputError(f"k={k} exceeds the {n} available points")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = _pairwise_sq_dist(points, centers[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[i] = points[rng.integers(n)]
        else:
            centers[i] = points[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, _pairwise_sq_dist(points, centers[i : i + 1]).ravel())

    assign = np.full(n, -1)
    for _ in range(max_iter):
        dist = _pairwise_sq_dist(points, centers)
        new_assign = dist.argmin(axis=1)
        min_dist = dist[np.arange(n), new_assign]
        for cluster in range(k):
            mask = new_assign == cluster
            if mask.any():
                centers[cluster] = points[mask].mean(axis=0)
            else:
                farthest = int(min_dist.argmax())
                centers[cluster] = points[farthest]
                new_assign[farthest] = cluster
                min_dist[farthest] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centers, assign


def bovw_fit(patches, seed: int) -> BovwCodebook:
    """Fit the 100-word codebook on the pooled local descriptors of the patches."""
    descs = np.vstack([local_descriptors(_pixels(p)) for p in patches]) if len(patches) else np.empty((0, LOCAL_DESC_DIM))
    if descs.shape[0] < BOVW_CLUSTERS:
        raise InputError(
            f"codebook needs >= {BOVW_CLUSTERS} local descriptors, got {descs.shape[0]}"
        )
    centers, _ = kmeans(descs, BOVW_CLUSTERS, seed)
    return BovwCodebook(centers=centers, seed=seed)


def bovw_encode(patch: np.ndarray, codebook: BovwCodebook) -> np.ndarray:
    """L1-normalized 100-bin histogram of nearest-centre assignments."""
    descs = local_descriptors(_pixels(patch))
    assign = _pairwise_sq_dist(descs, codebook.centers).argmin(axis=1)
    hist = np.bincount(assign, minlength=BOVW_CLUSTERS).astype(float)
    return hist / hist.sum()


def _pixels(patch):
    return patch.pixels if hasattr(patch, "pixels") else patch
