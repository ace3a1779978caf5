"""Local pattern descriptors over the 8-neighbourhood: LBP, LDEP, LWP, LBDP.

All four produce raw occurrence histograms over interior pixels (pixels whose
full 8-neighbourhood is in bounds); batch extraction L1-normalizes them at the
module boundary. All comparisons use the >= tie rule.
"""

from __future__ import annotations

import numpy as np

from .base import grayscale

# circular neighbour order starting east, counter-clockwise; bit i has weight 2**i
NEIGHBOR_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))

LBP_DIM = 59
LDEP_DIM = 24
LWP_DIM = 256
LBDP_DIM = 256


def _neighbor_stack(gray: np.ndarray) -> np.ndarray:
    """Stack of the 8 neighbours of every interior pixel: (8, H-2, W-2)."""
    h, w = gray.shape
    return np.stack(
        [gray[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc] for dr, dc in NEIGHBOR_OFFSETS]
    )


def _transitions(pattern: int) -> int:
    bits = [(pattern >> i) & 1 for i in range(8)]
    return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))


# the 58 uniform byte patterns (<= 2 circular transitions) in ascending order;
# everything else maps to the catch-all bin 58
UNIFORM_PATTERNS = tuple(p for p in range(256) if _transitions(p) <= 2)
_LBP_BIN_OF = np.full(256, LBP_DIM - 1, dtype=int)
for _i, _p in enumerate(UNIFORM_PATTERNS):
    _LBP_BIN_OF[_p] = _i


def uniform_lbp_bin(pattern: int) -> int:
    """Histogram bin of a raw 8-bit pattern (58 uniform bins + catch-all)."""
    return int(_LBP_BIN_OF[pattern])


def lbp(patch: np.ndarray) -> np.ndarray:
    """Uniform LBP (P=8, R=1): 59-bin histogram; bins sum to the interior count."""
    gray = grayscale(patch)
    neighbors = _neighbor_stack(gray)
    center = gray[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=int)
    for i in range(8):
        codes |= (neighbors[i] >= center).astype(int) << i
    return np.bincount(_LBP_BIN_OF[codes].ravel(), minlength=LBP_DIM).astype(float)


# --- LDEP -------------------------------------------------------------------

# diagonal order: NW, NE, SE, SW (1-indexed in the code layout)
DIAGONAL_OFFSETS = ((-1, -1), (-1, 1), (1, 1), (1, -1))

# the 12 ordered (max position, min position) pairs, positions 1..4
_EXTREMA_PAIRS = tuple((i, j) for i in range(1, 5) for j in range(1, 5) if i != j)
_PAIR_INDEX = {pair: k for k, pair in enumerate(_EXTREMA_PAIRS)}

# a flat neighbourhood resolves to max position 1, min position 4, no deviation
LDEP_FLAT_BIN = _PAIR_INDEX[(1, 4)] * 2


def ldep_code(center: float, diagonals) -> int:
    """Code in 0..23 from the positions of the diagonal extrema plus a bit for
    the centre deviating beyond them. Ties: first max position, last min position."""
    diagonals = list(diagonals)
    max_val = max(diagonals)
    min_val = min(diagonals)
    pos_max = diagonals.index(max_val) + 1
    pos_min = len(diagonals) - 1 - diagonals[::-1].index(min_val) + 1
    deviates = 1 if (center > max_val or center < min_val) else 0
    return _PAIR_INDEX[(pos_max, pos_min)] * 2 + deviates


def ldep(patch: np.ndarray) -> np.ndarray:
    """Local diagonal extrema pattern: 24-bin histogram over interior pixels."""
    gray = grayscale(patch)
    h, w = gray.shape
    stack = np.stack(
        [gray[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc] for dr, dc in DIAGONAL_OFFSETS]
    )
    center = gray[1:-1, 1:-1]
    pos_max = stack.argmax(axis=0)  # first index attaining the max
    pos_min = 3 - stack[::-1].argmin(axis=0)  # last index attaining the min
    deviates = (center > stack.max(axis=0)) | (center < stack.min(axis=0))
    pair_lut = np.full((4, 4), -1, dtype=int)
    for (i, j), k in _PAIR_INDEX.items():
        pair_lut[i - 1, j - 1] = k
    codes = pair_lut[pos_max, pos_min] * 2 + deviates.astype(int)
    return np.bincount(codes.ravel(), minlength=LDEP_DIM).astype(float)


# --- LWP --------------------------------------------------------------------


def _haar8(values: np.ndarray) -> np.ndarray:
    """Full 3-level Haar decomposition of 8 values along axis 0 using
    pairwise means/half-differences: [A3, D3, D2 x2, D1 x4]."""
    a1 = (values[0::2] + values[1::2]) / 2.0
    d1 = (values[0::2] - values[1::2]) / 2.0
    a2 = (a1[0::2] + a1[1::2]) / 2.0
    d2 = (a1[0::2] - a1[1::2]) / 2.0
    a3 = (a2[0::2] + a2[1::2]) / 2.0
    d3 = (a2[0::2] - a2[1::2]) / 2.0
    return np.concatenate([a3, d3, d2, d1], axis=0)


def lwp(patch: np.ndarray) -> np.ndarray:
    """Local wavelet pattern: the 8 circular neighbours are Haar-decomposed and
    each coefficient compared (>=) against the decomposition of a flat
    neighbourhood at the centre value; 8 bits -> 256-bin histogram."""
    gray = grayscale(patch)
    coeffs = _haar8(_neighbor_stack(gray))
    center = gray[1:-1, 1:-1]
    reference = np.zeros_like(coeffs)
    reference[0] = center  # flat-neighbourhood approximation; details are zero
    codes = np.zeros(center.shape, dtype=int)
    for k in range(8):
        codes |= (coeffs[k] >= reference[k]).astype(int) << k
    return np.bincount(codes.ravel(), minlength=LWP_DIM).astype(float)


# --- LBDP -------------------------------------------------------------------


def _to_u8(gray: np.ndarray) -> np.ndarray:
    """Round-half-up quantization to 8-bit for bit-plane work."""
    return np.floor(gray + 0.5).astype(np.uint8)


def lbdp(patch: np.ndarray) -> np.ndarray:
    """Local bit-plane decoded pattern: per plane b, the 8 neighbour bits are
    decoded as a byte and compared (>=) with the centre intensity; the 8
    per-plane bits form a 256-bin histogram code."""
    gray = _to_u8(grayscale(patch))
    neighbors = _neighbor_stack(gray).astype(int)
    center = gray[1:-1, 1:-1].astype(int)
    codes = np.zeros(center.shape, dtype=int)
    for plane in range(8):
        decoded = np.zeros(center.shape, dtype=int)
        for i in range(8):
            decoded += ((neighbors[i] >> plane) & 1) << i
        codes |= (decoded >= center).astype(int) << plane
    return np.bincount(codes.ravel(), minlength=LBDP_DIM).astype(float)
