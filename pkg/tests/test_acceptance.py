"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with its stated tolerance. Run with `pytest -s` to see the
lines; the optional full-data reproduction is skipped unless
NUCLEIFUSE_DATA_DIR points at the real datasets.
"""

import json
import math
import os
import time

import numpy as np
import pytest
from PIL import Image

from nucleifuse import featstore
from nucleifuse.classify import TrainConfig, mlp_gradient, mlp_predict_proba
from nucleifuse.cli import main
from nucleifuse.dataset import make_folds
from nucleifuse.descriptors import (
    CONCAT_WIDTH,
    DESCRIPTOR_DIMS,
    DESCRIPTOR_ORDER,
    LEGACY_CONCAT_WIDTH,
    bovw_fit,
    extract_all,
)
from nucleifuse.ensemble import (
    concat_features,
    ensemble_stage,
    member_cv_probabilities,
    pool_probabilities,
)
from nucleifuse.metrics import build_report, confusion, cross_entropy, macro_prf, multiclass_auc
from nucleifuse.reduction import k_policy, pca_fit, pca_transform

from .conftest import random_patch
from .oracles import naive_lbdp, naive_lbp, naive_ldep, naive_lwp, pairwise_auc

DEEP_WIDTHS = (4096, 4096, 4096, 2048, 2048, 1024)


def _verdict(label, ok, detail=""):
    print(f"\nACCEPTANCE {'PASS' if ok else 'FAIL'}: {label}" + (f" ({detail})" if detail else ""))
    assert ok, f"{label}: {detail}"


def test_criterion_pooling_algebra():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n_members = int(rng.integers(2, 6))
        rows = int(rng.integers(1, 4))
        members = [rng.uniform(1e-6, 1 - 1e-6, size=(rows, 4)) for _ in range(n_members)]

        pooled_same = pool_probabilities([members[0]] * n_members)
        worst = max(worst, float(np.abs(pooled_same - members[0]).max()))

        perm = rng.permutation(n_members)
        a = pool_probabilities(members)
        b = pool_probabilities([members[i] for i in perm])
        worst = max(worst, float(np.abs(a - b).max()))

        comp = pool_probabilities([1.0 - m for m in members])
        worst = max(worst, float(np.abs(comp - (1.0 - a)).max()))

        bumped = [m.copy() for m in members]
        r, c = int(rng.integers(rows)), int(rng.integers(4))
        bumped[0][r, c] = min(bumped[0][r, c] + 1e-3, 1 - 1e-6)
        if bumped[0][r, c] > members[0][r, c]:
            assert pool_probabilities(bumped)[r, c] > a[r, c], "monotonicity violated"

        single = pool_probabilities([members[0]], weights=[1.0])
        worst = max(worst, float(np.abs(single - members[0]).max()))
    elapsed = time.perf_counter() - started
    _verdict(
        "pooling algebra (idempotence/permutation/complement/monotonicity/identity, "
        "1000 cases each)",
        worst < 1e-12 and elapsed < 1.0,
        f"max deviation {worst:.2e}, {elapsed:.2f}s",
    )


def test_criterion_pooling_worked_example():
    pooled = pool_probabilities([np.array([[0.8]]), np.array([[0.5]])])
    error = abs(pooled[0, 0] - 2.0 / 3.0)
    _verdict("pooling worked example (0.8, 0.5) -> 2/3", error < 1e-12, f"error {error:.2e}")


def test_criterion_descriptor_dims():
    started = time.perf_counter()
    rng = np.random.default_rng(7)
    patches = [random_patch(rng) for _ in range(100)]
    codebook = bovw_fit(patches, seed=0)
    matrices = extract_all(patches, codebook)
    dims_ok = all(
        matrices[name].values.shape == (100, DESCRIPTOR_DIMS[name]) for name in DESCRIPTOR_ORDER
    )
    stacked = concat_features([matrices[name] for name in DESCRIPTOR_ORDER])
    elapsed = time.perf_counter() - started
    _verdict(
        "descriptor dimensionality on 100 random patches",
        dims_ok and stacked.values.shape[1] == CONCAT_WIDTH == 2743 and elapsed < 10.0,
        f"concatenated={stacked.values.shape[1]} (commonly quoted legacy total "
        f"{LEGACY_CONCAT_WIDTH}; +{CONCAT_WIDTH - LEGACY_CONCAT_WIDTH} documented), {elapsed:.2f}s",
    )


def test_criterion_descriptor_oracles():
    from nucleifuse.descriptors import lbdp, lbp, ldep, lwp

    rng = np.random.default_rng(99)
    pairs = ((lbp, naive_lbp), (ldep, naive_ldep), (lwp, naive_lwp), (lbdp, naive_lbdp))
    ok = True
    for _ in range(200):
        patch = random_patch(rng, size=6)
        for fast, naive in pairs:
            if not np.array_equal(fast(patch), naive(patch)):
                ok = False
    _verdict("descriptor oracle equivalence (lbp/ldep/lwp/lbdp, 200 6x6 patches)", ok)


def test_criterion_rotation_invariance():
    from nucleifuse.descriptors import lcod, rshd

    rng = np.random.default_rng(41)
    worst = 0.0
    for _ in range(100):
        patch = random_patch(rng)
        for fn in (lcod, rshd):
            base = fn(patch)
            for k in (1, 2, 3):
                worst = max(worst, float(np.abs(fn(np.rot90(patch, k)) - base).max()))
    _verdict("rotation invariance of lcod/rshd (100 patches)", worst <= 1e-9, f"max {worst:.2e}")


def test_criterion_pca():
    started = time.perf_counter()
    rng = np.random.default_rng(3)

    X = rng.normal(size=(50, 12))
    model = pca_fit(X, 8)
    ortho = float(np.abs(model.components @ model.components.T - np.eye(8)).max())

    Xf = rng.normal(size=(30, 9))
    full = pca_fit(Xf, 9)
    recon = pca_transform(full, Xf) @ full.components + full.mean
    roundtrip = float(np.abs(recon - Xf).max())

    hcf_widths = [k_policy("handcrafted", DESCRIPTOR_DIMS[n]) for n in DESCRIPTOR_ORDER]
    deep_total = 0
    for width in DEEP_WIDTHS:
        stand_in = rng.normal(size=(1100, width))
        fitted = pca_fit(stand_in, k_policy("deep", width))
        deep_total += fitted.k
        ortho = max(ortho, float(np.abs(
            fitted.components @ fitted.components.T - np.eye(fitted.k)).max()))
    elapsed = time.perf_counter() - started
    _verdict(
        "pca orthonormality/round-trip/width policy",
        ortho < 1e-8 and roundtrip < 1e-6 and sum(hcf_widths) == 783 and deep_total == 6000
        and elapsed < 30.0,
        f"ortho {ortho:.2e}, roundtrip {roundtrip:.2e}, hcf {sum(hcf_widths)}, "
        f"deep {deep_total}, {elapsed:.1f}s",
    )


def test_criterion_mlp_gradient_check():
    from nucleifuse.classify import HIDDEN_UNITS, MlpModel

    started = time.perf_counter()
    eps = 1e-5
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(3, 9))
        model = MlpModel(
            W1=rng.normal(scale=0.6, size=(HIDDEN_UNITS, d)),
            b1=rng.normal(scale=0.2, size=HIDDEN_UNITS),
            W2=rng.normal(scale=0.6, size=(4, HIDDEN_UNITS)),
            b2=rng.normal(scale=0.2, size=4),
            feat_mean=np.zeros(d),
            feat_scale=np.ones(d),
        )
        X = rng.normal(size=(8, d))
        y = rng.integers(0, 4, size=8)
        grads = mlp_gradient(model, X, y)

        def batch_loss():
            probs = mlp_predict_proba(model, X)
            return float(-np.log(probs[np.arange(8), y]).mean())

        for name in ("W1", "b1", "W2", "b2"):
            param = getattr(model, name)
            numeric = np.zeros_like(param)
            flat = param.reshape(-1)
            num_flat = numeric.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                hi = batch_loss()
                flat[idx] = orig - eps
                lo = batch_loss()
                flat[idx] = orig
                num_flat[idx] = (hi - lo) / (2 * eps)
            denom = np.linalg.norm(grads[name]) + np.linalg.norm(numeric)
            if denom > 0:
                worst = max(worst, float(np.linalg.norm(grads[name] - numeric) / denom))
    elapsed = time.perf_counter() - started
    _verdict(
        "mlp analytic gradient vs central differences (50 seeded pairs)",
        worst < 1e-4 and elapsed < 10.0,
        f"worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_metrics_oracles():
    rng = np.random.default_rng(17)
    auc_ok = True
    for _ in range(500):
        n = int(rng.integers(6, 20))
        y = rng.integers(0, 4, size=n)
        if len(np.unique(y)) < 2:
            continue
        probs = rng.integers(0, 5, size=(n, 4)) / 4.0
        expected = [
            pairwise_auc((y == c).astype(int), probs[:, c].tolist())
            for c in range(4)
            if 0 < (y == c).sum() < n
        ]
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            got = multiclass_auc(y, probs)
        if abs(got - float(np.mean(expected))) > 1e-12:
            auc_ok = False

    prf_ok = True
    for _ in range(100):
        y_true = rng.integers(0, 4, size=60)
        y_pred = rng.integers(0, 4, size=60)
        p, r, f1 = macro_prf(y_true, y_pred)
        mat = confusion(y_true, y_pred)
        per_p, per_r = [], []
        for c in range(4):
            tp = mat[c, c]
            predicted = mat[:, c].sum()
            actual = mat[c, :].sum()
            if actual == 0:
                continue
            per_p.append(tp / predicted if predicted else 0.0)
            per_r.append(tp / actual)
        exp_p, exp_r = float(np.mean(per_p)), float(np.mean(per_r))
        exp_f1 = 0.0 if exp_p + exp_r == 0 else 2 * exp_p * exp_r / (exp_p + exp_r)
        if max(abs(p - exp_p), abs(r - exp_r), abs(f1 - exp_f1)) > 1e-12:
            prf_ok = False

    uniform_loss = cross_entropy([0, 1, 2, 3], np.full((4, 4), 0.25))
    ce_ok = abs(uniform_loss - math.log(4)) < 1e-12
    _verdict(
        "metrics oracles (500 AUC pair-counting cases, macro P/R/F1 recompute, ln 4)",
        auc_ok and prf_ok and ce_ok,
        f"uniform loss {uniform_loss:.12f}",
    )


def test_criterion_synthetic_ensemble_gain():
    started = time.perf_counter()
    gains = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        labels = np.tile(np.arange(4), 200)
        n = len(labels)
        folds = make_folds(n, labels, 2, seed=seed).assignment
        members, member_f1 = [], []
        for view in range(9):
            X = 1.25 * np.eye(4)[labels] + rng.normal(size=(n, 4))
            probs = member_cv_probabilities(
                X,
                labels,
                folds,
                TrainConfig(lr=0.05, momentum=0.9, max_epochs=40, batch_size=64,
                            seed=seed * 100 + view),
            )
            members.append(probs)
            member_f1.append(build_report(labels, probs).f1)
        assert all(0.5 <= f1 <= 0.8 for f1 in member_f1), (
            f"seed {seed}: member F1 outside [0.5, 0.8]: {member_f1}"
        )
        report, _, _ = ensemble_stage(
            members, labels, folds,
            TrainConfig(lr=0.05, momentum=0.9, max_epochs=40, batch_size=64, seed=seed),
        )
        gains.append((report.f1, max(member_f1)))
    elapsed = time.perf_counter() - started
    strict = all(stage > best for stage, best in gains)
    _verdict(
        "synthetic cascaded-ensemble gain over 9 weak views, 10 seeds",
        strict and elapsed < 300.0,
        f"stage F1 {min(g[0] for g in gains):.3f}..{max(g[0] for g in gains):.3f} vs "
        f"best member {max(g[1] for g in gains):.3f}, {elapsed:.0f}s",
    )


def test_criterion_dimensional_identities():
    from nucleifuse.ensemble import concat_run

    rng = np.random.default_rng(5)
    blocks = []
    for name in DESCRIPTOR_ORDER:
        width = DESCRIPTOR_DIMS[name]
        X = rng.normal(size=(120, width))
        model = pca_fit(X, k_policy("handcrafted", width))
        blocks.append(featstore.FeatureMatrix(pca_transform(model, X), name))
    hcf_width = concat_features(blocks).values.shape[1]

    deep_width = sum(k_policy("deep", w) for w in DEEP_WIDTHS)
    combined = hcf_width + deep_width

    # the hcf+resnet50 width comes from an actual fold-wise reduced run at
    # the true matrix dimensions
    n = 2200
    labels = np.tile(np.arange(4), n // 4)
    named, kinds = [], {}
    for name in DESCRIPTOR_ORDER:
        named.append((name, rng.normal(size=(n, DESCRIPTOR_DIMS[name]))))
        kinds[name] = "handcrafted"
    resnet = rng.normal(size=(n, 2048))
    resnet[:, :4] += 5 * np.eye(4)[labels]
    named.append(("resnet50", resnet))
    kinds["resnet50"] = "deep"
    _, hcf_resnet = concat_run(
        named, labels, kinds, folds=2,
        cfg=TrainConfig(lr=0.05, momentum=0.9, max_epochs=10, batch_size=128, seed=0),
    )

    no_pca = {
        "hcf": CONCAT_WIDTH,
        "deep": sum(DEEP_WIDTHS),
        "hcf+deep": CONCAT_WIDTH + sum(DEEP_WIDTHS),
        "hcf+resnet50": CONCAT_WIDTH + 2048,
        "hcf+densenet121": CONCAT_WIDTH + 1024,
    }
    legacy = {
        "hcf": LEGACY_CONCAT_WIDTH,
        "deep": 17408,
        "hcf+deep": LEGACY_CONCAT_WIDTH + 17408,
        "hcf+resnet50": LEGACY_CONCAT_WIDTH + 2048,
        "hcf+densenet121": LEGACY_CONCAT_WIDTH + 1024,
    }
    divergences = {key: no_pca[key] - legacy[key] for key in no_pca}
    pca_ok = (hcf_width, deep_width, combined, hcf_resnet) == (783, 6000, 6783, 1783)
    no_pca_ok = no_pca["deep"] == 17408 and all(
        div in (0, CONCAT_WIDTH - LEGACY_CONCAT_WIDTH) for div in divergences.values()
    )
    _verdict(
        "dimensional identities (pca 783/6000/6783/1783; unreduced widths reported)",
        pca_ok and no_pca_ok,
        f"pca=({hcf_width},{deep_width},{combined},{hcf_resnet}), unreduced={no_pca}, "
        f"divergence vs legacy quote: +{CONCAT_WIDTH - LEGACY_CONCAT_WIDTH} on hcf-bearing rows",
    )


def _fixture_dataset(root, rng):
    data = root / "data"
    data.mkdir()
    pixels = rng.integers(0, 256, size=(120, 120, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(data / "img0.png")
    names = ["epithelial", "fibroblast", "inflammatory", "miscellaneous"]
    rows = []
    for c, count in enumerate((10, 10, 10, 6)):
        for i in range(count):
            rows.append(f"{6 + c * 26 + i * 2},{8 + i * 11},{names[c]}")
    (data / "img0.csv").write_text("\n".join(rows) + "\n")
    return data


def _run_pipeline(root, data, seed, rng_deep):
    archive = root / "archive"
    balanced = root / "balanced"
    features = root / "features"
    assert main(["extract", "--format", "crchisto", "--data", str(data),
                 "--out", str(archive), "--seed", str(seed)]) == 0
    assert main(["balance", "--archive", str(archive), "--out", str(balanced),
                 "--seed", str(seed), "--k-neighbors", "3"]) == 0
    assert main(["features", "--archive", str(balanced), "--out", str(features),
                 "--desc", "lbp,lcod", "--seed", str(seed)]) == 0
    labels = featstore.read_labels(features / "labels.csv")
    for i in range(2):
        deep = rng_deep.normal(size=(len(labels), 16))
        deep[:, :4] += np.eye(4)[labels] * 3
        featstore.write_featmat(deep, f"net{i}", features / f"net{i}.featmat")
    config = {
        "hcf": {"lbp": "lbp.featmat", "lcod": "lcod.featmat"},
        "deep": {"net0": "net0.featmat", "net1": "net1.featmat"},
        "labels": "labels.csv",
    }
    (features / "cascade.json").write_text(json.dumps(config, sort_keys=True))
    train_out = root / "train"
    assert main(["train", "--featmat", str(features / "lbp.featmat"),
                 "--labels", str(features / "labels.csv"), "--out", str(train_out),
                 "--seed", str(seed), "--epochs", "20", "--lr", "0.05"]) == 0
    cascade_out = root / "cascade"
    assert main(["cascade", "--config", str(features / "cascade.json"),
                 "--out", str(cascade_out), "--folds", "2", "--seed", str(seed),
                 "--epochs", "20", "--lr", "0.05", "--momentum", "0.9", "--pca", "off"]) == 0
    artifacts = {}
    for path in sorted(root.rglob("*")):
        # run_config.json records the invocation (including the output paths),
        # so it legitimately differs between the two run directories
        if path.name == "run_config.json":
            continue
        if path.is_file() and path.suffix in (".json", ".csv", ".featmat", ".mlp", ".bin"):
            artifacts[str(path.relative_to(root))] = path.read_bytes()
    return artifacts


def test_criterion_pipeline_determinism(tmp_path):
    rng = np.random.default_rng(123)
    run_a = tmp_path / "a"
    run_b = tmp_path / "b"
    run_a.mkdir()
    run_b.mkdir()
    data_a = _fixture_dataset(run_a, np.random.default_rng(555))
    data_b = _fixture_dataset(run_b, np.random.default_rng(555))
    artifacts_a = _run_pipeline(run_a, data_a, seed=11, rng_deep=np.random.default_rng(777))
    artifacts_b = _run_pipeline(run_b, data_b, seed=11, rng_deep=np.random.default_rng(777))
    same_keys = set(artifacts_a) == set(artifacts_b)
    diffs = [k for k in artifacts_a if same_keys and artifacts_a[k] != artifacts_b[k]]
    _verdict(
        "fixture pipeline determinism (byte-identical artifacts across runs)",
        same_keys and not diffs,
        f"{len(artifacts_a)} artifacts compared" + (f", diffs: {diffs}" if diffs else ""),
    )
    del rng


@pytest.mark.skipif(
    "NUCLEIFUSE_DATA_DIR" not in os.environ,
    reason="full-data reproduction requires the real datasets (set NUCLEIFUSE_DATA_DIR)",
)
def test_optional_full_data_reproduction():
    """Hours-scale reproduction on the real data: individual handcrafted
    ordering (rshd/lcod on top, rshd F1 within +-0.03 of 0.6606), cascaded
    deep-ensemble F1 >= 0.97, and the MLP attaining the lowest selection loss.
    Deep feature files must be exported by the companion extractor first."""
    raise NotImplementedError(
        "run the documented full-data recipe in README.md; this desk suite "
        "intentionally does not bundle the datasets"
    )
