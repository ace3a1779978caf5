"""Binary feature-matrix interchange format (FEATMAT) and label files.

A FEATMAT file is a 52-byte header followed by the row-major float32
payload:

    bytes  0..8   magic  b"FEATMAT1"
    bytes  8..12  rows   uint32 LE
    bytes 12..16  cols   uint32 LE
    bytes 16..20  dtype  uint32 LE, 1 = 32-bit LE float
    bytes 20..52  source id, ASCII, NUL-padded to 32 bytes

Matrices are float32 on disk (deep features are 32-bit natively) and
promoted to float64 in memory for the numeric stages.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

MAGIC = b"FEATMAT1"
HEADER_SIZE = 52
DTYPE_F32 = 1
_HEADER_FMT = "<8sIII32s"


@dataclass
class FeatureMatrix:
    """Dense sample-by-feature matrix with descriptor provenance."""

    values: np.ndarray
    source_id: str
    # (member source_id, width) pairs when this matrix is a concatenation
    members: tuple = field(default_factory=tuple)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _encode_source_id(source_id: str) -> bytes:
    raw = source_id.encode("ascii")
    if len(raw) > 32:
        raise InputError(f"source_id longer than 32 bytes: {source_id!r}")
    return raw.ljust(32, b"\x00")


def write_featmat(matrix: np.ndarray, source_id: str, path) -> None:
    """Write a finite 2-D matrix as a FEATMAT file."""
    values = np.asarray(matrix)
    if values.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {values.shape}")
    if values.size and not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise InputError(f"non-finite value at ({bad[0]}, {bad[1]}); refusing to write")
    header = struct.pack(
        _HEADER_FMT,
        MAGIC,
        values.shape[0],
        values.shape[1],
        DTYPE_F32,
        _encode_source_id(source_id),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype("<f4").tobytes(order="C"))


def read_featmat(path) -> FeatureMatrix:
    """Read and validate a FEATMAT file; returns float64 values in memory."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise InputError(f"{path}: truncated header, {len(blob)} bytes < {HEADER_SIZE}")
    magic, rows, cols, dtype, rawname = struct.unpack_from(_HEADER_FMT, blob)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r} at byte offset 0")
    if dtype != DTYPE_F32:
        raise InputError(f"{path}: unsupported dtype code {dtype} at byte offset 16")
    expected = HEADER_SIZE + rows * cols * 4
    if len(blob) != expected:
        raise InputError(
            f"{path}: payload size mismatch at byte offset {min(len(blob), expected)}: "
            f"file has {len(blob)} bytes, header implies {expected}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE).reshape(rows, cols)
    if values.size and not np.all(np.isfinite(values)):
        idx = int(np.argwhere(~np.isfinite(values.ravel()))[0][0])
        raise InputError(f"{path}: non-finite value at byte offset {HEADER_SIZE + idx * 4}")
    source_id = rawname.rstrip(b"\x00").decode("ascii")
    return FeatureMatrix(values=values.astype(np.float64), source_id=source_id)


def write_labels(labels, path) -> None:
    """Write labels as `sample_index,label` CSV rows aligned with FEATMAT order."""
    labels = np.asarray(labels, dtype=int)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, lab in enumerate(labels):
            writer.writerow([i, int(lab)])


def read_labels(path) -> np.ndarray:
    """Read a `sample_index,label` CSV into a dense label vector.

    Indices must cover 0..n-1 exactly once (any order); labels must be in 0..3.
    """
    pairs = []
    with open(path, "r", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                idx, lab = int(row[0]), int(row[1])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-integer field: {row}") from exc
            if not 0 <= lab <= 3:
                raise InputError(f"{path}:{lineno}: label {lab} outside 0..3")
            pairs.append((idx, lab))
    n = len(pairs)
    labels = np.full(n, -1, dtype=int)
    for idx, lab in pairs:
        if not 0 <= idx < n:
            raise InputError(f"{path}: sample index {idx} outside 0..{n - 1}")
        if labels[idx] != -1:
            raise InputError(f"{path}: duplicate sample index {idx}")
        labels[idx] = lab
    return labels


def check_alignment(matrix: FeatureMatrix, labels: np.ndarray) -> None:
    """Consumers call this before use; rows must match the label count."""
    if matrix.rows != len(labels):
        raise InputError(
            f"feature/label misalignment: {matrix.rows} rows vs {len(labels)} labels "
            f"(source {matrix.source_id!r})"
        )
