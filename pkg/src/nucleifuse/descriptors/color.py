"""Colour descriptors: quantized-shade occurrence histogram (LCOD) and the
shade x structuring-element fusion (RSHD).

Both are histograms of per-pixel quantities, so they are exactly invariant to
90/180/270-degree patch rotation.
"""

from __future__ import annotations

import numpy as np

LCOD_DIM = 256
RSHD_DIM = 320
RSHD_SHADES = 64
RSHD_ELEMENTS = 5


def _quantize(patch: np.ndarray, levels: tuple) -> np.ndarray:
    """Per-channel uniform quantization of 8-bit RGB into shade indices."""
    patch = np.asarray(patch)
    shades = np.zeros(patch.shape[:2], dtype=int)
    for ch, n_levels in enumerate(levels):
        step = 256 // n_levels
        shades = shades * n_levels + np.minimum(patch[:, :, ch] // step, n_levels - 1)
    return shades


def lcod(patch: np.ndarray) -> np.ndarray:
    """256-shade (8/8/4 RGB levels) occurrence histogram, L1-normalized."""
    shades = _quantize(patch, (8, 8, 4))
    hist = np.bincount(shades.ravel(), minlength=LCOD_DIM).astype(float)
    return hist / hist.sum()


# rotation-invariant structuring elements on the 3x3 neighbourhood:
# centre, plus, diagonal cross, full square, ring
STRUCTURING_ELEMENTS = (
    ((0, 0),),
    ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)),
    ((0, 0), (-1, -1), (-1, 1), (1, -1), (1, 1)),
    tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)),
    ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
)


def rshd(patch: np.ndarray) -> np.ndarray:
    """64-shade (4/4/4) colour histogram crossed with 5 structuring-element
    homogeneity responses, fused to 320 values and L1-normalized.

    A pixel responds to an element when every pixel under the element carries
    the pixel's own shade; responses are tallied per (shade, element) over
    interior pixels.
    """
    shades = _quantize(patch, (4, 4, 4))
    h, w = shades.shape
    table = np.zeros((RSHD_SHADES, RSHD_ELEMENTS))
    if h < 3 or w < 3:
        return table.ravel()
    center = shades[1:-1, 1:-1]
    for e, element in enumerate(STRUCTURING_ELEMENTS):
        homogeneous = np.ones(center.shape, dtype=bool)
        for dr, dc in element:
            homogeneous &= shades[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc] == center
        counts = np.bincount(center[homogeneous].ravel(), minlength=RSHD_SHADES)
        table[:, e] = counts[:RSHD_SHADES]
    total = table.sum()
    return table.ravel() / total if total > 0 else table.ravel()
