import numpy as np
import pytest

from deepextract.archive import ArchiveError, read_archive

from .conftest import color_coded_patches, write_fixture_archive


def test_read_hand_built_archive(tmp_path, rng):
    pixels, labels = color_coded_patches(3, rng)
    write_fixture_archive(tmp_path / "arch", pixels, labels)
    got_pixels, got_labels, manifest = read_archive(tmp_path / "arch")
    assert np.array_equal(got_pixels, pixels)
    assert np.array_equal(got_labels, labels)
    assert manifest["name"] == "fixture"


def test_read_archive_written_by_pipeline(tmp_path, rng):
    # cross-component check: consume an archive produced by the actual
    # pipeline writer
    from nucleifuse.dataset import DatasetManifest, ImagePatch, write_archive

    pixels, labels = color_coded_patches(2, rng)
    patches = [
        ImagePatch(pixels=p, source_id=f"img{i}", center=(13, 13), label=int(l))
        for i, (p, l) in enumerate(zip(pixels, labels))
    ]
    counts = np.bincount(labels, minlength=4).tolist()
    manifest = DatasetManifest(
        name="from-pipeline",
        class_names=("epithelial", "fibroblast", "inflammatory", "miscellaneous"),
        counts_before=counts,
        counts_after=counts,
        seed=1,
    )
    write_archive(tmp_path / "arch", patches, manifest)
    got_pixels, got_labels, got_manifest = read_archive(tmp_path / "arch")
    assert np.array_equal(got_pixels, pixels)
    assert np.array_equal(got_labels, labels)
    assert got_manifest["name"] == "from-pipeline"


def test_missing_files_rejected(tmp_path):
    with pytest.raises(ArchiveError, match="missing"):
        read_archive(tmp_path / "nope")


def test_bad_record_size_rejected(tmp_path, rng):
    pixels, labels = color_coded_patches(2, rng)
    arch = write_fixture_archive(tmp_path / "arch", pixels, labels)
    blob = (arch / "patches.bin").read_bytes()
    (arch / "patches.bin").write_bytes(blob[:-5])
    with pytest.raises(ArchiveError, match="multiple"):
        read_archive(arch)
