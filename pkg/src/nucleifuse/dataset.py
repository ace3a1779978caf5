"""Dataset ingestion: nucleus patch extraction, ADASYN balancing, and
reproducible splits/folds.

Patches are 27x27x3 windows around annotated nucleus centres. Source images
are mirror-padded by 13 pixels before windowing so border nuclei yield full
patches and published per-class counts are preserved.

Class index order is fixed across datasets:
0 = epithelial, 1 = fibroblast/spindle, 2 = inflammatory, 3 = miscellaneous.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InputError

PATCH_SIZE = 27
PATCH_HALF = PATCH_SIZE // 2  # 13
PATCH_BYTES = PATCH_SIZE * PATCH_SIZE * 3
N_CLASSES = 4

CLASS_NAMES = ("epithelial", "fibroblast", "inflammatory", "miscellaneous")
CONSEP_CLASS_NAMES = ("epithelial", "spindle", "inflammatory", "miscellaneous")

# 7 annotation classes merged down to the 4 working classes:
# healthy + malignant epithelial -> epithelial; fibroblast/muscle/endothelial
# -> spindle; inflammatory kept; "other" -> miscellaneous.
CONSEP_CLASS_MERGE = {1: 3, 2: 2, 3: 0, 4: 0, 5: 1, 6: 1, 7: 1}
MIN_COMPONENT_PIXELS = 4

TRAIN, VAL, TEST = 0, 1, 2
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass
class ImagePatch:
    """Fixed-size RGB nucleus window with provenance."""

    pixels: np.ndarray  # 27 x 27 x 3 uint8
    source_id: str
    center: tuple  # (row, col) in the source image
    label: int

    def __post_init__(self):
        if self.pixels.shape != (PATCH_SIZE, PATCH_SIZE, 3):
            raise InputError(f"patch shape must be 27x27x3, got {self.pixels.shape}")
        if self.label not in (0, 1, 2, 3):
            raise InputError(f"label {self.label} outside 0..3")


@dataclass
class DatasetManifest:
    name: str
    class_names: tuple
    counts_before: list
    counts_after: list
    seed: int
    split_fractions: tuple = DEFAULT_FRACTIONS

    def __post_init__(self):
        if any(a < b for a, b in zip(self.counts_after, self.counts_before)):
            raise InputError("counts_after must be >= counts_before per class")
        if any(not 0.0 < f < 1.0 for f in self.split_fractions):
            raise InputError("split fractions must each be in (0,1)")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "class_names": list(self.class_names),
            "counts_before": [int(c) for c in self.counts_before],
            "counts_after": [int(c) for c in self.counts_after],
            "seed": int(self.seed),
            "split_fractions": list(self.split_fractions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        return cls(
            name=data["name"],
            class_names=tuple(data["class_names"]),
            counts_before=data["counts_before"],
            counts_after=data["counts_after"],
            seed=data["seed"],
            split_fractions=tuple(data["split_fractions"]),
        )


@dataclass
class SplitAssignment:
    """Total, disjoint bucket assignment; deterministic under the seed."""

    kind: str  # "split" or "fold"
    assignment: np.ndarray  # bucket code or fold index per sample
    seed: int
    fractions: tuple = ()
    k: int = 0

    def indices(self, bucket: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == bucket)


def mirror_pad(image: np.ndarray, margin: int = PATCH_HALF) -> np.ndarray:
    """Reflect-pad an H x W x C raster by `margin` on both spatial axes."""
    return np.pad(image, ((margin, margin), (margin, margin), (0, 0)), mode="reflect")


def extract_patches(image: np.ndarray, centers) -> list:
    """One 27x27 patch per (row, col, label) centre; borders are mirror-completed.

    source image provenance is attached by the caller via `source_id`
    keyword on the returned patches when needed; see `extract_image`.
    """
    return extract_image(image, centers, source_id="")


def extract_image(image: np.ndarray, centers, source_id: str) -> list:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"expected H x W x 3 image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < PATCH_SIZE or w < PATCH_SIZE:
        raise InputError(f"image {h}x{w} smaller than the {PATCH_SIZE}x{PATCH_SIZE} window")
    bad = [
        i
        for i, (r, c, _lab) in enumerate(centers)
        if not (0 <= int(r) < h and 0 <= int(c) < w)
    ]
    if bad:
        raise InputError(f"centre(s) outside image bounds at index {bad[0]}")
    padded = mirror_pad(image)
    patches = []
    for r, c, lab in centers:
        r, c = int(r), int(c)
        window = padded[r : r + PATCH_SIZE, c : c + PATCH_SIZE]
        patches.append(
            ImagePatch(
                pixels=np.ascontiguousarray(window),
                source_id=source_id,
                center=(r, c),
                label=int(lab),
            )
        )
    return patches


_CONNECT_8 = np.ones((3, 3), dtype=int)


def extract_from_class_map(image: np.ndarray, class_map: np.ndarray, source_id: str = "") -> list:
    """One patch per connected annotation component, centred at its centroid.

    Components use 8-connectivity; components smaller than 4 pixels are
    discarded as annotation noise. The 7 annotation labels are merged to the
    4 working classes. An empty map yields an empty list.
    """
    image = np.asarray(image)
    class_map = np.asarray(class_map)
    if class_map.shape != image.shape[:2]:
        raise InputError(
            f"class map shape {class_map.shape} differs from image {image.shape[:2]}"
        )
    values = np.unique(class_map)
    unknown = [int(v) for v in values if v != 0 and int(v) not in CONSEP_CLASS_MERGE]
    if unknown:
        raise InputError(f"unknown annotation class value(s): {unknown}")
    centers = []
    for value in values:
        if value == 0:
            continue
        labeled, n_comp = ndimage.label(class_map == value, structure=_CONNECT_8)
        for comp in range(1, n_comp + 1):
            rows, cols = np.nonzero(labeled == comp)
            if len(rows) < MIN_COMPONENT_PIXELS:
                continue
            r = int(np.floor(rows.mean() + 0.5))
            c = int(np.floor(cols.mean() + 0.5))
            centers.append((r, c, CONSEP_CLASS_MERGE[int(value)]))
    centers.sort()
    if not centers:
        return []
    return extract_image(image, centers, source_id=source_id)


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer allocation of `total` proportional to weights, summing exactly."""
    ideal = weights / weights.sum() * total
    counts = np.floor(ideal).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(ideal - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def adasyn_balance(features, labels, k_neighbors: int = 5, seed: int = 0):
    """Adaptive synthetic oversampling of minority classes.

    Every synthetic sample is a convex combination x_i + lam * (x_z - x_i) of a
    minority sample and one of its k nearest same-class neighbours, with the
    per-sample allocation proportional to the fraction of other-class samples
    among its k nearest neighbours in the full dataset. Originals are returned
    unchanged, synthetics appended after them.

    A class whose count is within 90% of the majority count is left alone
    (the conventional imbalance-tolerance threshold of the algorithm).
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InputError("features must be n x d aligned with labels")
    if k_neighbors < 1:
        raise InputError(f"k_neighbors must be >= 1, got {k_neighbors}")
    counts = np.bincount(y, minlength=y.max() + 1)
    majority = counts.max()
    rng = np.random.default_rng(seed)

    new_rows = []
    new_labels = []
    for cls in np.flatnonzero(counts):
        n_cls = counts[cls]
        if n_cls == majority:
            continue
        if n_cls / majority >= 0.9:
            continue  # close enough to balanced; skip, matching d_th = 0.9
        if n_cls < k_neighbors + 1:
            raise InputError(
                f"class {int(cls)} has {int(n_cls)} samples, "
                f"needs at least k_neighbors+1 = {k_neighbors + 1}"
            )
        cls_idx = np.flatnonzero(y == cls)
        X_cls = X[cls_idx]
        total_needed = int(majority - n_cls)

        # density weights: fraction of other-class samples among each minority
        # sample's k nearest neighbours in the whole dataset
        density = _other_class_fraction(X, y, cls_idx, k_neighbors)
        if density.sum() <= 0:
            # no class overlap anywhere: fall back to uniform allocation
            density = np.ones(len(cls_idx))
        allocation = _largest_remainder(total_needed, density)

        # k nearest same-class neighbours (excluding self)
        neighbor_idx = _knn_within(X_cls, k_neighbors)
        for local_i, g in enumerate(allocation):
            if g == 0:
                continue
            picks = rng.integers(0, k_neighbors, size=g)
            lam = rng.random(size=(g, 1))
            base = X_cls[local_i]
            neigh = X_cls[neighbor_idx[local_i][picks]]
            new_rows.append(base + lam * (neigh - base))
            new_labels.extend([cls] * int(g))

    if not new_rows:
        return X.copy(), y.copy()
    return (
        np.vstack([X] + new_rows),
        np.concatenate([y, np.asarray(new_labels, dtype=int)]),
    )


_KNN_CHUNK = 512


def _other_class_fraction(X, y, cls_idx, k):
    """Per minority sample, fraction of its k nearest full-set neighbours
    (self excluded) that belong to another class."""
    fractions = np.empty(len(cls_idx))
    for start in range(0, len(cls_idx), _KNN_CHUNK):
        chunk = cls_idx[start : start + _KNN_CHUNK]
        d2 = ((X[chunk][:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(len(chunk)), chunk] = np.inf  # exclude self
        nearest = np.argsort(d2, kind="stable", axis=1)[:, :k]
        other = y[nearest] != y[chunk[0]]
        fractions[start : start + len(chunk)] = other.sum(axis=1) / k
    return fractions


def _knn_within(X_cls, k):
    """Indices of each row's k nearest neighbours within the class (self excluded)."""
    out = np.empty((len(X_cls), k), dtype=int)
    for start in range(0, len(X_cls), _KNN_CHUNK):
        stop = min(start + _KNN_CHUNK, len(X_cls))
        d2 = ((X_cls[start:stop][:, None, :] - X_cls[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d2, kind="stable", axis=1)[:, :k]
    return out


def make_splits(n_samples: int, labels, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitAssignment:
    """Stratified train/val/test partition with exact global bucket sizes."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) != n_samples:
        raise InputError("labels length differs from n_samples")
    fractions = tuple(float(f) for f in fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InputError(f"fractions must sum to 1, got {sum(fractions)}")
    n_buckets = len(fractions)
    targets = _largest_remainder(n_samples, np.asarray(fractions))
    rng = np.random.default_rng(seed)

    classes = np.unique(labels)
    # per-class proportional allocation
    alloc = np.zeros((len(classes), n_buckets), dtype=int)
    for ci, cls in enumerate(classes):
        n_cls = int((labels == cls).sum())
        alloc[ci] = _largest_remainder(n_cls, np.asarray(fractions))

    # reconcile per-class allocations with the exact global targets
    totals = alloc.sum(axis=0)
    while not np.array_equal(totals, targets):
        over = int(np.argmax(totals - targets))
        under = int(np.argmin(totals - targets))
        donor = int(np.argmax(alloc[:, over]))
        alloc[donor, over] -= 1
        alloc[donor, under] += 1
        totals = alloc.sum(axis=0)

    assignment = np.empty(n_samples, dtype=np.int8)
    for ci, cls in enumerate(classes):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        cursor = 0
        for bucket in range(n_buckets):
            take = alloc[ci, bucket]
            assignment[idx[cursor : cursor + take]] = bucket
            cursor += take
    return SplitAssignment(kind="split", assignment=assignment, seed=seed, fractions=fractions)


def make_folds(n_samples: int, labels, k: int, seed: int = 0) -> SplitAssignment:
    """Stratified k-fold assignment; per-class counts differ by at most 1 across folds."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) != n_samples:
        raise InputError("labels length differs from n_samples")
    if k < 2:
        raise InputError(f"k must be >= 2, got {k}")
    class_counts = np.bincount(labels)
    smallest = class_counts[class_counts > 0].min()
    if k > smallest:
        raise InputError(f"k={k} exceeds smallest class count {int(smallest)}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n_samples, dtype=np.int8)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for fold, chunk in enumerate(np.array_split(idx, k)):
            assignment[chunk] = fold
    return SplitAssignment(kind="fold", assignment=assignment, seed=seed, k=k)


# ---------------------------------------------------------------------------
# patch archive: patches.bin (raw 27x27x3 uint8 records) + index.csv +
# labels.csv + manifest.json
# ---------------------------------------------------------------------------


def write_archive(directory, patches, manifest: DatasetManifest) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "patches.bin", "wb") as fh:
        for patch in patches:
            fh.write(np.ascontiguousarray(patch.pixels, dtype=np.uint8).tobytes())
    with open(directory / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "source_id", "center_row", "center_col", "label"])
        for i, patch in enumerate(patches):
            writer.writerow([i, patch.source_id, patch.center[0], patch.center[1], patch.label])
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, patch in enumerate(patches):
            writer.writerow([i, patch.label])
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_archive(directory):
    """Returns (patches, manifest). Validates record count against the index."""
    directory = Path(directory)
    bin_path = directory / "patches.bin"
    index_path = directory / "index.csv"
    manifest_path = directory / "manifest.json"
    for path in (bin_path, index_path, manifest_path):
        if not path.exists():
            raise InputError(f"archive file missing: {path}")
    raw = bin_path.read_bytes()
    if len(raw) % PATCH_BYTES != 0:
        raise InputError(f"{bin_path}: size {len(raw)} not a multiple of {PATCH_BYTES}")
    n = len(raw) // PATCH_BYTES
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, PATCH_SIZE, PATCH_SIZE, 3)
    patches = []
    with open(index_path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:1] != ["sample_index"]:
            raise InputError(f"{index_path}: unexpected header {header}")
        for row in reader:
            i = int(row[0])
            patches.append(
                ImagePatch(
                    pixels=pixels[i].copy(),
                    source_id=row[1],
                    center=(int(row[2]), int(row[3])),
                    label=int(row[4]),
                )
            )
    if len(patches) != n:
        raise InputError(f"{index_path}: {len(patches)} entries for {n} records")
    manifest = DatasetManifest.from_dict(json.loads(manifest_path.read_text()))
    return patches, manifest


def class_counts(labels, n_classes: int = N_CLASSES) -> list:
    return np.bincount(np.asarray(labels, dtype=int), minlength=n_classes).tolist()
