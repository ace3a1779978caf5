"""Shared descriptor helpers: grayscale conversion and gradient machinery."""

from __future__ import annotations

import numpy as np

from ..errors import InputError

N_ORIENT_BINS = 8


def grayscale(patch: np.ndarray) -> np.ndarray:
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B, float64 in [0, 255]."""
    patch = np.asarray(patch, dtype=float)
    if patch.ndim != 3 or patch.shape[2] != 3:
        raise InputError(f"expected H x W x 3 patch, got shape {patch.shape}")
    return 0.299 * patch[:, :, 0] + 0.587 * patch[:, :, 1] + 0.114 * patch[:, :, 2]


def gradient_fields(gray: np.ndarray):
    """Central-difference gradients (one-sided at edges), magnitude and the
    unsigned orientation bin (8 bins over [0, 180) degrees)."""
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((ang / (np.pi / N_ORIENT_BINS)).astype(int), N_ORIENT_BINS - 1)
    return mag, bins


def orientation_histogram(mag: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Magnitude-weighted 8-bin orientation histogram of a region."""
    return np.bincount(bins.ravel(), weights=mag.ravel(), minlength=N_ORIENT_BINS)[
        :N_ORIENT_BINS
    ]


def axis_cells(length: int, n_cells: int) -> list:
    """Split 0..length into n_cells contiguous runs whose sizes differ by <= 1."""
    base = length // n_cells
    rem = length % n_cells
    sizes = [base + (1 if i < rem else 0) for i in range(n_cells)]
    edges = np.cumsum([0] + sizes)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(n_cells)]
