"""FEATMAT writer: the binary feature-matrix format consumed by the
classification pipeline.

Layout: 52-byte header -- magic b"FEATMAT1", rows uint32 LE, cols uint32 LE,
dtype code uint32 LE (1 = 32-bit LE float), 32-byte NUL-padded ASCII source
id -- followed by the row-major float32 payload.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

MAGIC = b"FEATMAT1"
DTYPE_F32 = 1


def write_featmat(matrix: np.ndarray, source_id: str, path) -> None:
    values = np.asarray(matrix)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {values.shape}")
    if values.size and not np.all(np.isfinite(values)):
        raise ValueError("refusing to write non-finite values")
    raw_name = source_id.encode("ascii")
    if len(raw_name) > 32:
        raise ValueError(f"source_id longer than 32 bytes: {source_id!r}")
    header = struct.pack(
        "<8sIII32s", MAGIC, values.shape[0], values.shape[1], DTYPE_F32, raw_name.ljust(32, b"\x00")
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype("<f4").tobytes(order="C"))


def write_labels(labels, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, lab in enumerate(np.asarray(labels, dtype=int)):
            writer.writerow([i, int(lab)])
