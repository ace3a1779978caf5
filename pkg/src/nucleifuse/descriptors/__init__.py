"""Nine handcrafted feature descriptors over raw RGB nucleus patches.

Widths are fixed by contract:

    hog 256, lbp 59, bovw 100, surf 1216, ldep 24,
    lwp 256, lcod 256, rshd 320, lbdp 256   (concatenated: 2743)

Histogram descriptors leave `extract_all` L1-normalized so downstream PCA
sees comparable scales; hog (block-normalized) and surf (unit-norm keypoint
blocks with exact zero padding) pass through unchanged.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import InputError
from ..featstore import FeatureMatrix
from .base import grayscale
from .bovw import BOVW_CLUSTERS, BovwCodebook, bovw_encode, bovw_fit, kmeans, local_descriptors
from .color import lcod, rshd
from .gradients import hog, surf_like
from .local_patterns import LDEP_FLAT_BIN, lbdp, lbp, ldep, lwp, uniform_lbp_bin

DESCRIPTOR_DIMS = {
    "hog": 256,
    "lbp": 59,
    "bovw": 100,
    "surf": 1216,
    "ldep": 24,
    "lwp": 256,
    "lcod": 256,
    "rshd": 320,
    "lbdp": 256,
}
DESCRIPTOR_ORDER = ("hog", "lbp", "bovw", "surf", "ldep", "lwp", "lcod", "rshd", "lbdp")
CONCAT_WIDTH = sum(DESCRIPTOR_DIMS.values())  # 2743

# widely quoted legacy total for the same unreduced stack; differs by 112 from
# the arithmetic sum, which is authoritative here
LEGACY_CONCAT_WIDTH = 2631

_L1_NORMALIZED = ("lbp", "ldep", "lwp", "lbdp", "lcod", "rshd", "bovw")


def _pixels(patch):
    return patch.pixels if hasattr(patch, "pixels") else np.asarray(patch)


def compute_descriptor(name: str, patch, codebook: BovwCodebook | None = None) -> np.ndarray:
    pixels = _pixels(patch)
    if name == "bovw":
        if codebook is None:
            raise InputError("bovw requires a fitted codebook")
        return bovw_encode(pixels, codebook)
    fn = {
        "hog": hog,
        "lbp": lbp,
        "surf": surf_like,
        "ldep": ldep,
        "lwp": lwp,
        "lcod": lcod,
        "rshd": rshd,
        "lbdp": lbdp,
    }.get(name)
    if fn is None:
        raise InputError(f"unknown descriptor: {name!r}")
    return fn(pixels)


def _worker_count(n_items: int) -> int:
    cap = os.environ.get("NUCLEIFUSE_THREADS")
    workers = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(workers, n_items))


def extract_all(patches, codebook: BovwCodebook | None = None, names=DESCRIPTOR_ORDER):
    """Per-descriptor feature matrices with identical row order.

    Returns a dict name -> FeatureMatrix. Histogram descriptors are
    L1-normalized here (zero rows stay zero). Extraction is pure per patch and
    runs on a thread pool capped by NUCLEIFUSE_THREADS.
    """
    if "bovw" in names and codebook is None:
        raise InputError("extract_all requires a fitted bovw codebook")
    pixel_list = [_pixels(p) for p in patches]
    out = {}
    for name in names:
        dim = DESCRIPTOR_DIMS[name]
        if not pixel_list:
            matrix = np.empty((0, dim))
        else:
            workers = _worker_count(len(pixel_list))
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    rows = list(pool.map(lambda px: compute_descriptor(name, px, codebook), pixel_list))
            else:
                rows = [compute_descriptor(name, px, codebook) for px in pixel_list]
            matrix = np.vstack(rows)
            if name in _L1_NORMALIZED:
                sums = matrix.sum(axis=1, keepdims=True)
                matrix = np.divide(matrix, sums, out=matrix, where=sums > 0)
        out[name] = FeatureMatrix(values=matrix, source_id=name)
    return out


__all__ = [
    "BOVW_CLUSTERS",
    "BovwCodebook",
    "CONCAT_WIDTH",
    "DESCRIPTOR_DIMS",
    "DESCRIPTOR_ORDER",
    "LDEP_FLAT_BIN",
    "LEGACY_CONCAT_WIDTH",
    "bovw_encode",
    "bovw_fit",
    "compute_descriptor",
    "extract_all",
    "grayscale",
    "hog",
    "kmeans",
    "lbdp",
    "lbp",
    "lcod",
    "ldep",
    "local_descriptors",
    "lwp",
    "rshd",
    "surf_like",
    "uniform_lbp_bin",
]
