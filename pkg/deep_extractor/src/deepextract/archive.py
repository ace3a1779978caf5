"""Reader for nucleus patch archives.

The archive layout is the pipeline's interchange contract: `patches.bin`
holds raw 27x27x3 uint8 records back to back, `index.csv` has one
provenance row per record, `manifest.json` carries dataset metadata.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

PATCH_SIZE = 27
PATCH_BYTES = PATCH_SIZE * PATCH_SIZE * 3


class ArchiveError(Exception):
    pass


def read_archive(directory):
    """Returns (pixels uint8 array of n x 27 x 27 x 3, labels int array, manifest dict)."""
    directory = Path(directory)
    bin_path = directory / "patches.bin"
    index_path = directory / "index.csv"
    manifest_path = directory / "manifest.json"
    for path in (bin_path, index_path, manifest_path):
        if not path.exists():
            raise ArchiveError(f"archive file missing: {path}")
    raw = bin_path.read_bytes()
    if len(raw) % PATCH_BYTES != 0:
        raise ArchiveError(f"{bin_path}: size {len(raw)} not a multiple of {PATCH_BYTES}")
    n = len(raw) // PATCH_BYTES
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, PATCH_SIZE, PATCH_SIZE, 3)
    labels = np.full(n, -1, dtype=np.int64)
    with open(index_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:1] != ["sample_index"]:
            raise ArchiveError(f"{index_path}: unexpected header {header}")
        for row in reader:
            idx = int(row[0])
            if not 0 <= idx < n:
                raise ArchiveError(f"{index_path}: sample index {idx} outside 0..{n - 1}")
            labels[idx] = int(row[4])
    if (labels < 0).any() or labels.max() > 3:
        raise ArchiveError(f"{index_path}: incomplete or out-of-range labels")
    manifest = json.loads(manifest_path.read_text())
    return pixels.copy(), labels, manifest
