"""Gradient descriptors: block-normalized HOG and a det-Hessian keypoint
descriptor with a fixed output budget.
"""

from __future__ import annotations

import numpy as np

from .base import axis_cells, gradient_fields, grayscale, orientation_histogram

HOG_DIM = 256
_HOG_CELLS = 4  # 4x4 cell grid, 8 orientation bins, 2x2 blocks at stride 1

SURF_DIM = 1216
SURF_MAX_KEYPOINTS = 19  # 1216 / 64
SURF_DESC_LEN = 64
SURF_THRESHOLD_RATIO = 1e-4
_GAUSS_SIGMA = 1.2
_GAUSS_RADIUS = 3
_WINDOW = 12  # descriptor window, split into 4x4 subregions of 3x3


def _hog_half(gray: np.ndarray) -> np.ndarray:
    """128-dim HOG: 4x4 cells x 8 bins, each cell's histogram averaged over the
    L2 normalizations of the 2x2 blocks containing it."""
    mag, bins = gradient_fields(gray)
    cell_hist = np.zeros((_HOG_CELLS, _HOG_CELLS, 8))
    row_cells = axis_cells(gray.shape[0], _HOG_CELLS)
    col_cells = axis_cells(gray.shape[1], _HOG_CELLS)
    for ri, (r0, r1) in enumerate(row_cells):
        for ci, (c0, c1) in enumerate(col_cells):
            cell_hist[ri, ci] = orientation_histogram(mag[r0:r1, c0:c1], bins[r0:r1, c0:c1])
    out = np.zeros_like(cell_hist)
    counts = np.zeros((_HOG_CELLS, _HOG_CELLS, 1))
    for br in range(_HOG_CELLS - 1):
        for bc in range(_HOG_CELLS - 1):
            block = cell_hist[br : br + 2, bc : bc + 2]
            norm = np.sqrt((block**2).sum())
            if norm > 1e-12:
                out[br : br + 2, bc : bc + 2] += block / norm
            counts[br : br + 2, bc : bc + 2] += 1
    return (out / counts).ravel()


def hog(patch: np.ndarray) -> np.ndarray:
    """256-dim HOG: the 128-dim block-normalized histogram of the patch
    concatenated with the same computed on its 2x pixel-doubled version,
    keeping gradient content at two scales."""
    gray = grayscale(patch)
    doubled = np.repeat(np.repeat(gray, 2, axis=0), 2, axis=1)
    return np.concatenate([_hog_half(gray), _hog_half(doubled)])


# --- det-Hessian keypoints ----------------------------------------------------


def gaussian_kernel(sigma: float = _GAUSS_SIGMA, radius: int = _GAUSS_RADIUS) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def smooth(gray: np.ndarray) -> np.ndarray:
    """Separable Gaussian smoothing with reflect boundary handling."""
    kernel = gaussian_kernel()
    radius = len(kernel) // 2
    padded = np.pad(gray, radius, mode="reflect")
    tmp = np.apply_along_axis(lambda row: np.convolve(row, kernel, mode="valid"), 1, padded)
    return np.apply_along_axis(lambda col: np.convolve(col, kernel, mode="valid"), 0, tmp)


def hessian_determinant(smoothed: np.ndarray) -> np.ndarray:
    """det(Hessian) per interior pixel (borders zero), from discrete second
    derivatives: Lxx/Lyy via [1,-2,1], Lxy via the cross difference / 4."""
    det = np.zeros_like(smoothed)
    s = smoothed
    lxx = s[1:-1, 2:] - 2.0 * s[1:-1, 1:-1] + s[1:-1, :-2]
    lyy = s[2:, 1:-1] - 2.0 * s[1:-1, 1:-1] + s[:-2, 1:-1]
    lxy = (s[2:, 2:] + s[:-2, :-2] - s[2:, :-2] - s[:-2, 2:]) / 4.0
    det[1:-1, 1:-1] = lxx * lyy - lxy**2
    return det


def detect_keypoints(gray: np.ndarray) -> list:
    """Strict 3x3 local maxima of det(Hessian) above the relative threshold,
    strongest first (ties broken by position)."""
    det = hessian_determinant(smooth(gray))
    max_response = det.max()
    if max_response <= 0:
        return []
    threshold = SURF_THRESHOLD_RATIO * max_response
    inner = det[1:-1, 1:-1]
    is_max = inner > threshold
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            h, w = det.shape
            shifted = det[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
            is_max &= inner > shifted
    rows, cols = np.nonzero(is_max)
    points = [(float(det[r + 1, c + 1]), int(r + 1), int(c + 1)) for r, c in zip(rows, cols)]
    points.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(r, c, score) for score, r, c in points]


def _keypoint_descriptor(padded: np.ndarray, r: int, c: int, pad: int) -> np.ndarray:
    """64 values: 4x4 subregions of a 12x12 window, each contributing
    (sum dx, sum |dx|, sum dy, sum |dy|) of central differences; L2-normalized."""
    r0 = r + pad - _WINDOW // 2
    c0 = c + pad - _WINDOW // 2
    desc = np.empty((4, 4, 4))
    for sr in range(4):
        for sc in range(4):
            rows = slice(r0 + sr * 3, r0 + sr * 3 + 3)
            cols = slice(c0 + sc * 3, c0 + sc * 3 + 3)
            dx = padded[rows, cols.start + 1 : cols.stop + 1] - padded[rows, cols.start - 1 : cols.stop - 1]
            dy = padded[rows.start + 1 : rows.stop + 1, cols] - padded[rows.start - 1 : rows.stop - 1, cols]
            desc[sr, sc] = (dx.sum(), np.abs(dx).sum(), dy.sum(), np.abs(dy).sum())
    flat = desc.ravel()
    norm = np.linalg.norm(flat)
    return flat / norm if norm > 1e-12 else flat


def surf_like(patch: np.ndarray) -> np.ndarray:
    """Keypoint descriptor vector: up to 19 det-Hessian keypoints, 64 values
    each in detection-score order, zero-padded/truncated to exactly 1216."""
    gray = grayscale(patch)
    smoothed = smooth(gray)
    pad = _WINDOW // 2 + 2
    padded = np.pad(smoothed, pad, mode="reflect")
    out = np.zeros(SURF_DIM)
    for i, (r, c, _score) in enumerate(detect_keypoints(gray)[:SURF_MAX_KEYPOINTS]):
        out[i * SURF_DESC_LEN : (i + 1) * SURF_DESC_LEN] = _keypoint_descriptor(
            padded, r, c, pad
        )
    return out
