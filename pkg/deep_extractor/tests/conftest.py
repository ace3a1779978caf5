import csv
import json

import numpy as np
import pytest

CLASS_COLORS = ((200, 30, 30), (30, 200, 30), (30, 30, 200), (200, 200, 30))


def color_coded_patches(n_per_class, rng, size=27):
    """Synthetic patches whose dominant colour encodes the class: linearly
    separable by construction."""
    pixels, labels = [], []
    for cls, color in enumerate(CLASS_COLORS):
        base = np.broadcast_to(np.array(color, dtype=np.int64), (n_per_class, size, size, 3))
        noise = rng.integers(-20, 21, size=base.shape)
        pixels.append(np.clip(base + noise, 0, 255).astype(np.uint8))
        labels.extend([cls] * n_per_class)
    return np.concatenate(pixels), np.array(labels, dtype=np.int64)


def write_fixture_archive(directory, pixels, labels):
    """Archive written byte-by-byte against the documented layout."""
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "patches.bin", "wb") as fh:
        for patch in pixels:
            fh.write(patch.tobytes())
    with open(directory / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "source_id", "center_row", "center_col", "label"])
        for i, label in enumerate(labels):
            writer.writerow([i, "fixture", 13, 13, int(label)])
    counts = np.bincount(labels, minlength=4).tolist()
    manifest = {
        "name": "fixture",
        "class_names": ["epithelial", "fibroblast", "inflammatory", "miscellaneous"],
        "counts_before": counts,
        "counts_after": counts,
        "seed": 0,
        "split_fractions": [0.70, 0.15, 0.15],
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    (directory / "labels.csv").write_text("".join(f"{i},{int(l)}\n" for i, l in enumerate(labels)))
    return directory


@pytest.fixture
def rng():
    return np.random.default_rng(777)
