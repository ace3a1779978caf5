import numpy as np
import pytest

from nucleifuse.descriptors import (
    BOVW_CLUSTERS,
    BovwCodebook,
    CONCAT_WIDTH,
    DESCRIPTOR_DIMS,
    DESCRIPTOR_ORDER,
    LDEP_FLAT_BIN,
    bovw_encode,
    bovw_fit,
    compute_descriptor,
    extract_all,
    grayscale,
    hog,
    kmeans,
    lbdp,
    lbp,
    lcod,
    ldep,
    local_descriptors,
    lwp,
    rshd,
    surf_like,
    uniform_lbp_bin,
)
from nucleifuse.errors import InputError

from .conftest import constant_patch, random_patch
from .oracles import (
    naive_det_hessian_argmax,
    naive_lbdp,
    naive_lbp,
    naive_ldep,
    naive_lwp,
    orientation_mass,
)


def test_grayscale_white_and_gray():
    assert np.all(grayscale(constant_patch(255)) == 255.0)
    assert np.all(grayscale(constant_patch(93)) == 93.0)


def test_grayscale_pure_red():
    patch = np.zeros((27, 27, 3), dtype=np.uint8)
    patch[:, :, 0] = 255
    assert np.abs(grayscale(patch) - 76.245).max() < 1e-9


def test_all_dims_on_random_patches(rng, patches):
    codebook = bovw_fit(patches, seed=0)
    for patch in patches[:5]:
        for name, dim in DESCRIPTOR_DIMS.items():
            vec = compute_descriptor(name, patch, codebook)
            assert vec.shape == (dim,), name
            assert np.all(np.isfinite(vec)), name


def test_concat_width_constant():
    assert CONCAT_WIDTH == 2743
    assert sum(DESCRIPTOR_DIMS[n] for n in DESCRIPTOR_ORDER) == 2743


def test_descriptors_deterministic(rng, patches):
    codebook = bovw_fit(patches, seed=3)
    patch = patches[0]
    for name in DESCRIPTOR_ORDER:
        a = compute_descriptor(name, patch, codebook)
        b = compute_descriptor(name, patch, codebook)
        assert np.array_equal(a, b), name


# --- HOG ----------------------------------------------------------------------


def test_hog_constant_patch_zero():
    assert np.array_equal(hog(constant_patch(130)), np.zeros(256))


def test_hog_non_negative(rng):
    for _ in range(10):
        assert hog(random_patch(rng)).min() >= 0.0


def test_hog_vertical_step_edge_orientation():
    patch = np.zeros((27, 27, 3), dtype=np.uint8)
    patch[:, 14:, :] = 200  # vertical edge: gradient along x, orientation bin 0
    oracle_hist = orientation_mass(patch)
    assert oracle_hist.argmax() == 0
    assert oracle_hist[0] / oracle_hist.sum() > 0.99
    vec = hog(patch).reshape(2, 4, 4, 8)
    mass_per_bin = vec.sum(axis=(0, 1, 2))
    assert mass_per_bin.argmax() == 0
    assert mass_per_bin[0] / mass_per_bin.sum() > 0.99


# --- local patterns vs naive oracles -------------------------------------------


def test_lbp_constant_patch_single_bin():
    hist = lbp(constant_patch(77))
    # all-ones pattern (255) under the >= rule, 25x25 interior pixels
    assert hist[uniform_lbp_bin(255)] == 625
    assert hist.sum() == 625


def test_lbp_random_5x5_matches_oracle(rng):
    for _ in range(25):
        patch = random_patch(rng, size=5)
        assert np.array_equal(lbp(patch), naive_lbp(patch))


def test_lbp_sums_to_interior_count(rng):
    patch = random_patch(rng)
    assert lbp(patch).sum() == 25 * 25


def test_ldep_constant_patch_flat_bin():
    hist = ldep(constant_patch(10))
    assert hist[LDEP_FLAT_BIN] == 625
    assert hist.sum() == 625


def test_ldep_random_6x6_matches_oracle(rng):
    for _ in range(25):
        patch = random_patch(rng, size=6)
        assert np.array_equal(ldep(patch), naive_ldep(patch))


def test_lwp_constant_patch_single_bin():
    hist = lwp(constant_patch(200))
    assert hist[255] == 625
    assert hist.sum() == 625


def test_lwp_random_6x6_matches_oracle(rng):
    for _ in range(25):
        patch = random_patch(rng, size=6)
        assert np.array_equal(lwp(patch), naive_lwp(patch))


def test_lbdp_constant_patch_single_bin(rng):
    for value in (0, 37, 128, 255):
        hist = lbdp(constant_patch(value))
        assert (hist > 0).sum() == 1
        assert hist.sum() == 625


def test_lbdp_random_6x6_matches_oracle(rng):
    for _ in range(25):
        patch = random_patch(rng, size=6)
        assert np.array_equal(lbdp(patch), naive_lbdp(patch))


# --- colour descriptors ---------------------------------------------------------


def test_lcod_single_colour_one_hot():
    vec = lcod(constant_patch(100))
    assert (vec > 0).sum() == 1
    assert abs(vec.sum() - 1.0) < 1e-12


def test_lcod_rotation_invariance(rng):
    for _ in range(10):
        patch = random_patch(rng)
        base = lcod(patch)
        for k in (1, 2, 3):
            rotated = np.rot90(patch, k)
            assert np.abs(lcod(rotated) - base).max() < 1e-9


def test_lcod_rotate_and_recompute_oracle(rng):
    # independent check: rotation permutes pixels, so sorting the per-pixel
    # shade list must give the same multiset
    patch = random_patch(rng)
    assert np.abs(lcod(np.rot90(patch)) - lcod(patch)).max() == 0.0


def test_rshd_flat_patch_equal_elements():
    vec = rshd(constant_patch(60)).reshape(64, 5)
    nonzero_rows = np.flatnonzero(vec.sum(axis=1))
    assert len(nonzero_rows) == 1
    row = vec[nonzero_rows[0]]
    assert np.abs(row - row[0]).max() < 1e-12  # all 5 elements respond alike


def test_rshd_rotation_invariance(rng):
    for _ in range(10):
        patch = random_patch(rng)
        base = rshd(patch)
        for k in (1, 2, 3):
            assert np.abs(rshd(np.rot90(patch, k)) - base).max() < 1e-9


def test_rshd_dim_and_normalization(rng):
    vec = rshd(random_patch(rng))
    assert vec.shape == (320,)
    assert abs(vec.sum() - 1.0) < 1e-9


# --- SURF-like ------------------------------------------------------------------


def test_surf_constant_patch_all_zero():
    assert np.array_equal(surf_like(constant_patch(90)), np.zeros(1216))


def test_surf_dim(rng):
    assert surf_like(random_patch(rng)).shape == (1216,)


def test_surf_gaussian_blob_keypoint_near_center():
    rr, cc = np.meshgrid(np.arange(27), np.arange(27), indexing="ij")
    blob = 220.0 * np.exp(-((rr - 13.0) ** 2 + (cc - 13.0) ** 2) / (2 * 2.0**2))
    patch = np.repeat(blob[:, :, None], 3, axis=2).astype(np.uint8)
    oracle_r, oracle_c = naive_det_hessian_argmax(patch)
    assert abs(oracle_r - 13) <= 2 and abs(oracle_c - 13) <= 2
    vec = surf_like(patch)
    assert np.abs(vec[:64]).sum() > 0  # at least one keypoint found
    from nucleifuse.descriptors.gradients import detect_keypoints

    keypoints = detect_keypoints(grayscale(patch))
    assert any(abs(r - 13) <= 2 and abs(c - 13) <= 2 for r, c, _ in keypoints)
    top = keypoints[0]
    assert abs(top[0] - oracle_r) <= 1 and abs(top[1] - oracle_c) <= 1


def test_surf_keypoint_blocks_unit_norm(rng):
    vec = surf_like(random_patch(rng)).reshape(19, 64)
    norms = np.linalg.norm(vec, axis=1)
    for norm in norms:
        assert norm < 1e-12 or abs(norm - 1.0) < 1e-9


# --- BoVW -----------------------------------------------------------------------


def test_kmeans_recovers_separated_blobs(rng):
    means = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]])
    points = np.vstack([m + rng.normal(scale=0.5, size=(40, 2)) for m in means])
    centers, assign = kmeans(points, 3, seed=0)
    expected = np.array([points[i * 40 : (i + 1) * 40].mean(axis=0) for i in range(3)])
    # match recovered centres to the closed-form blob means
    for mean in expected:
        distances = np.linalg.norm(centers - mean, axis=1)
        assert distances.min() < 1e-6


def test_kmeans_k_exceeds_points(rng):
    with pytest.raises(InputError):
        kmeans(rng.normal(size=(5, 2)), 6, seed=0)


def test_bovw_one_hot_on_exact_center_match():
    patch = constant_patch(40)
    descs = local_descriptors(patch)
    assert np.abs(descs).max() == 0.0  # constant patch: all-zero local descriptors
    centers = np.ones((100, 8))
    centers[7] = 0.0  # centre 7 matches the all-zero descriptor exactly
    codebook = BovwCodebook(centers=centers, seed=0)
    vec = bovw_encode(patch, codebook)
    assert vec[7] == 1.0
    assert vec.sum() == 1.0


def test_bovw_dim_and_normalization(rng, patches):
    codebook = bovw_fit(patches, seed=1)
    assert codebook.centers.shape == (BOVW_CLUSTERS, 8)
    vec = bovw_encode(patches[0], codebook)
    assert vec.shape == (100,)
    assert abs(vec.sum() - 1.0) < 1e-12


def test_bovw_fit_requires_enough_descriptors(rng):
    few = [random_patch(rng) for _ in range(5)]  # 45 local descriptors < 100
    with pytest.raises(InputError, match="100"):
        bovw_fit(few, seed=0)


def test_bovw_fit_deterministic(rng, patches):
    a = bovw_fit(patches, seed=9)
    b = bovw_fit(patches, seed=9)
    assert np.array_equal(a.centers, b.centers)


# --- extract_all ----------------------------------------------------------------


def test_extract_all_dims_and_order(rng, patches):
    codebook = bovw_fit(patches, seed=0)
    subset = patches[:10]
    out = extract_all(subset, codebook)
    assert list(out.keys()) == list(DESCRIPTOR_ORDER)
    for name, matrix in out.items():
        assert matrix.values.shape == (10, DESCRIPTOR_DIMS[name])
        assert matrix.source_id == name


def test_extract_all_row_order_consistent(rng, patches):
    codebook = bovw_fit(patches, seed=0)
    out = extract_all(patches[:6], codebook)
    single = lcod(patches[2])
    single /= single.sum()
    assert np.allclose(out["lcod"].values[2], single)


def test_extract_all_empty_patch_list(rng, patches):
    codebook = bovw_fit(patches, seed=0)
    out = extract_all([], codebook)
    for name, matrix in out.items():
        assert matrix.values.shape == (0, DESCRIPTOR_DIMS[name])


def test_extract_all_l1_normalizes_histograms(rng, patches):
    codebook = bovw_fit(patches, seed=0)
    out = extract_all(patches[:4], codebook)
    for name in ("lbp", "ldep", "lwp", "lbdp", "lcod", "rshd", "bovw"):
        sums = out[name].values.sum(axis=1)
        assert np.abs(sums - 1.0).max() < 1e-9, name


def test_extract_all_requires_codebook(patches):
    with pytest.raises(InputError, match="codebook"):
        extract_all(patches[:2], None)


def test_extract_all_thread_cap_matches_serial(rng, patches, monkeypatch):
    codebook = bovw_fit(patches, seed=0)
    monkeypatch.setenv("NUCLEIFUSE_THREADS", "1")
    serial = extract_all(patches[:4], codebook, names=("lbp", "lcod"))
    monkeypatch.setenv("NUCLEIFUSE_THREADS", "4")
    threaded = extract_all(patches[:4], codebook, names=("lbp", "lcod"))
    for name in ("lbp", "lcod"):
        assert np.array_equal(serial[name].values, threaded[name].values)
