import numpy as np
import pytest

from nucleifuse.errors import InputError
from nucleifuse.featstore import (
    HEADER_SIZE,
    check_alignment,
    read_featmat,
    read_labels,
    write_featmat,
    write_labels,
)


def test_roundtrip_bit_identical(tmp_path, rng):
    X = rng.normal(size=(3, 5)).astype(np.float32)
    path = tmp_path / "x.featmat"
    write_featmat(X, "demo", path)
    back = read_featmat(path)
    assert back.source_id == "demo"
    assert back.values.dtype == np.float64
    assert np.array_equal(back.values.astype(np.float32), X)


def test_deep_feature_width(tmp_path, rng):
    X = rng.normal(size=(2, 2048))
    path = tmp_path / "resnet50.featmat"
    write_featmat(X, "resnet50", path)
    assert read_featmat(path).cols == 2048


def test_truncated_payload_rejected_with_offset(tmp_path, rng):
    path = tmp_path / "x.featmat"
    write_featmat(rng.normal(size=(4, 3)), "x", path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(InputError, match=str(len(blob) - 4)):
        read_featmat(path)


def test_bad_magic_rejected(tmp_path, rng):
    path = tmp_path / "x.featmat"
    write_featmat(rng.normal(size=(2, 2)), "x", path)
    blob = bytearray(path.read_bytes())
    blob[0] = ord("X")
    path.write_bytes(bytes(blob))
    with pytest.raises(InputError, match="magic"):
        read_featmat(path)


def test_nonfinite_write_rejected(tmp_path):
    X = np.array([[1.0, np.nan]])
    with pytest.raises(InputError, match="non-finite"):
        write_featmat(X, "x", tmp_path / "x.featmat")


def test_nonfinite_read_rejected_with_offset(tmp_path):
    path = tmp_path / "x.featmat"
    write_featmat(np.ones((1, 2)), "x", path)
    blob = bytearray(path.read_bytes())
    blob[HEADER_SIZE + 4 : HEADER_SIZE + 8] = np.float32(np.inf).tobytes()
    path.write_bytes(bytes(blob))
    with pytest.raises(InputError, match=str(HEADER_SIZE + 4)):
        read_featmat(path)


def test_long_source_id_rejected(tmp_path):
    with pytest.raises(InputError, match="32"):
        write_featmat(np.ones((1, 1)), "a" * 33, tmp_path / "x.featmat")


def test_labels_roundtrip(tmp_path):
    path = tmp_path / "labels.csv"
    write_labels([2, 0, 3], path)
    assert read_labels(path).tolist() == [2, 0, 3]


def test_labels_shuffled_indices_reordered(tmp_path, rng):
    labels = rng.integers(0, 4, size=40)
    perm = rng.permutation(40)
    path = tmp_path / "labels.csv"
    path.write_text("".join(f"{i},{labels[i]}\n" for i in perm))
    result = read_labels(path)
    # permutation-inverse check: entry i must be the label written for index i
    assert np.array_equal(result, labels)


def test_labels_duplicate_index_rejected(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("0,1\n0,2\n")
    with pytest.raises(InputError, match="duplicate"):
        read_labels(path)


def test_labels_gap_rejected(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("0,1\n2,2\n")
    with pytest.raises(InputError):
        read_labels(path)


def test_labels_out_of_range_rejected(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("0,4\n")
    with pytest.raises(InputError, match="outside 0..3"):
        read_labels(path)


def test_alignment_guard(tmp_path, rng):
    path = tmp_path / "x.featmat"
    write_featmat(rng.normal(size=(3, 2)), "x", path)
    matrix = read_featmat(path)
    check_alignment(matrix, np.zeros(3, dtype=int))
    with pytest.raises(InputError, match="misalignment"):
        check_alignment(matrix, np.zeros(4, dtype=int))
