"""Experiment orchestration CLI. Every command is deterministic given its
flags and seed, writes a run_config.json capturing the exact invocation, and
emits reports as JSON + CSV (plots as SVG where applicable).

Exit codes: 0 success, 2 input error, 3 numeric failure, 4 missing dependency.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import dataset, descriptors, ensemble, featstore, metrics, reduction, svgplot
from .classify import (
    TrainConfig,
    knn_predict,
    classifier_selection,
    mlp_predict_proba,
    mlp_train,
    save_mlp,
    tree_predict,
    tree_train,
)
from .errors import DependencyError, InputError, NucleifuseError, NumericError

IMAGE_EXTENSIONS = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")
CLASS_NAME_TO_INDEX = {
    "epithelial": 0,
    "fibroblast": 1,
    "inflammatory": 2,
    "miscellaneous": 3,
}


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def load_class_map(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.int64)


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"missing {what}: {path}")
    return path


def _write_run_config(out_dir: Path, command: str, args: dict) -> None:
    clean = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(args.items())
        if k != "fn"
    }
    payload = {"command": command, "args": clean}
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )


def _write_report(out_dir: Path, name: str, report) -> None:
    data = report.to_dict()
    metrics.validate_report_dict(data)
    (out_dir / f"{name}.report.json").write_text(
        json.dumps(data, sort_keys=True, indent=2) + "\n"
    )
    lines = [metrics.CSV_HEADER, report.csv_row(name)]
    for i, fold_report in enumerate(report.per_fold):
        lines.append(fold_report.csv_row(f"{name}/fold{i}"))
    (out_dir / f"{name}.report.csv").write_text("\n".join(lines) + "\n")


def _read_annotations(path) -> list:
    centers = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected row,col,class_name")
        try:
            row, col = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: non-integer coordinates") from exc
        name = parts[2].lower()
        if name not in CLASS_NAME_TO_INDEX:
            raise InputError(f"{path}:{lineno}: unknown class name {parts[2]!r}")
        centers.append((row, col, CLASS_NAME_TO_INDEX[name]))
    return centers


def cmd_extract(args) -> int:
    data_dir = _require(args.data, "dataset directory")
    out_dir = Path(args.out)
    images = sorted(
        p
        for p in data_dir.iterdir()
        if p.suffix.lower() in IMAGE_EXTENSIONS and not p.stem.endswith("_map")
    )
    if not images:
        raise DependencyError(f"no images found under {data_dir}")
    patches = []
    for image_path in images:
        image = load_rgb(image_path)
        if args.format == "crchisto":
            ann = _require(image_path.with_suffix(".csv"), f"annotations for {image_path.name}")
            centers = _read_annotations(ann)
            patches.extend(dataset.extract_image(image, centers, source_id=image_path.stem))
        else:
            map_path = _require(
                image_path.with_name(image_path.stem + "_map.png"),
                f"class map for {image_path.name}",
            )
            patches.extend(
                dataset.extract_from_class_map(
                    image, load_class_map(map_path), source_id=image_path.stem
                )
            )
    counts = dataset.class_counts([p.label for p in patches])
    class_names = (
        dataset.CLASS_NAMES if args.format == "crchisto" else dataset.CONSEP_CLASS_NAMES
    )
    manifest = dataset.DatasetManifest(
        name=args.name or data_dir.name,
        class_names=class_names,
        counts_before=counts,
        counts_after=counts,
        seed=args.seed,
    )
    dataset.write_archive(out_dir, patches, manifest)
    _write_run_config(out_dir, "extract", vars(args))
    print(f"extracted {len(patches)} patches, class counts {counts}")
    return 0


def cmd_balance(args) -> int:
    archive_dir = _require(args.archive, "patch archive")
    out_dir = Path(args.out)
    patches, manifest = dataset.read_archive(archive_dir)
    labels = np.array([p.label for p in patches])
    flat = np.stack([p.pixels.reshape(-1).astype(float) for p in patches])
    balanced, new_labels = dataset.adasyn_balance(
        flat, labels, k_neighbors=args.k_neighbors, seed=args.seed
    )
    out_patches = list(patches)
    for row, label in zip(balanced[len(patches) :], new_labels[len(patches) :]):
        pixels = np.clip(np.floor(row + 0.5), 0, 255).astype(np.uint8)
        out_patches.append(
            dataset.ImagePatch(
                pixels=pixels.reshape(27, 27, 3),
                source_id="adasyn",
                center=(13, 13),
                label=int(label),
            )
        )
    counts_after = dataset.class_counts(new_labels)
    new_manifest = dataset.DatasetManifest(
        name=manifest.name,
        class_names=manifest.class_names,
        counts_before=dataset.class_counts(labels),
        counts_after=counts_after,
        seed=args.seed,
        split_fractions=manifest.split_fractions,
    )
    dataset.write_archive(out_dir, out_patches, new_manifest)
    _write_run_config(out_dir, "balance", vars(args))
    print(f"balanced archive: class counts {counts_after}, total {len(out_patches)}")
    return 0


def cmd_features(args) -> int:
    archive_dir = _require(args.archive, "patch archive")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    patches, manifest = dataset.read_archive(archive_dir)
    labels = np.array([p.label for p in patches])
    names = args.desc.split(",") if args.desc else list(descriptors.DESCRIPTOR_ORDER)
    for name in names:
        if name not in descriptors.DESCRIPTOR_DIMS:
            raise InputError(f"unknown descriptor {name!r}")
    codebook = None
    if "bovw" in names:
        split = dataset.make_splits(len(patches), labels, manifest.split_fractions, args.seed)
        train_patches = [patches[i] for i in split.indices(dataset.TRAIN)]
        codebook = descriptors.bovw_fit(train_patches, seed=args.seed)
        featstore.write_featmat(codebook.centers, "bovw_codebook", out_dir / "bovw_codebook.featmat")
    matrices = descriptors.extract_all(patches, codebook, names=names)
    for name, matrix in matrices.items():
        featstore.write_featmat(matrix.values, name, out_dir / f"{name}.featmat")
    featstore.write_labels(labels, out_dir / "labels.csv")
    listing = {
        "feature_files": {name: f"{name}.featmat" for name in matrices},
        "labels": "labels.csv",
        "n_samples": len(patches),
    }
    if codebook is not None:
        listing["bovw_codebook"] = "bovw_codebook.featmat"
    (out_dir / "features_manifest.json").write_text(
        json.dumps(listing, sort_keys=True, indent=2) + "\n"
    )
    _write_run_config(out_dir, "features", vars(args))
    print(f"wrote {len(matrices)} feature files for {len(patches)} patches")
    return 0


def cmd_reduce(args) -> int:
    featmat_path = _require(args.featmat, "feature file")
    labels_path = _require(args.labels, "labels file")
    matrix = featstore.read_featmat(featmat_path)
    labels = featstore.read_labels(labels_path)
    featstore.check_alignment(matrix, labels)
    if args.k:
        k = args.k
    else:
        k = reduction.k_policy(args.kind, matrix.cols)
    split = dataset.make_splits(matrix.rows, labels, seed=args.seed)
    model = reduction.pca_fit(matrix.values[split.indices(dataset.TRAIN)], k)
    projected = reduction.pca_transform(model, matrix.values)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    featstore.write_featmat(projected, f"{matrix.source_id}-pca{k}", out_path)
    reduction.save_pca(model, out_path.with_suffix(out_path.suffix + ".pca"))
    clean = {k_: (str(v) if isinstance(v, Path) else v) for k_, v in sorted(vars(args).items()) if k_ != "fn"}
    out_path.with_suffix(out_path.suffix + ".run.json").write_text(
        json.dumps({"command": "reduce", "args": clean}, sort_keys=True, indent=2) + "\n"
    )
    print(f"reduced {matrix.source_id}: {matrix.cols} -> {k} columns")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        momentum=args.momentum,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        early_stop_patience=args.patience,
    )


def cmd_train(args) -> int:
    featmat_path = _require(args.featmat, "feature file")
    labels_path = _require(args.labels, "labels file")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = featstore.read_featmat(featmat_path)
    labels = featstore.read_labels(labels_path)
    featstore.check_alignment(matrix, labels)
    split = dataset.make_splits(matrix.rows, labels, seed=args.seed)
    tr, va, te = (split.indices(b) for b in (dataset.TRAIN, dataset.VAL, dataset.TEST))
    cfg = _train_config(args)
    model = mlp_train(matrix.values[tr], labels[tr], matrix.values[va], labels[va], cfg)
    save_mlp(model, out_dir / "model.mlp")
    test_probs = mlp_predict_proba(model, matrix.values[te])
    report = metrics.build_report(labels[te], test_probs)
    _write_report(out_dir, matrix.source_id or "model", report)
    all_probs = mlp_predict_proba(model, matrix.values)
    featstore.write_featmat(all_probs, f"{matrix.source_id}-probs", out_dir / "probs.featmat")
    _write_run_config(out_dir, "train", vars(args))
    print(report.csv_row(matrix.source_id or "model"))
    return 0


def _load_member_group(entries, base: Path) -> list:
    members = []
    for name, rel in entries.items():
        path = base / rel if not Path(rel).is_absolute() else Path(rel)
        _require(path, f"feature file for member {name!r}")
        members.append((name, featstore.read_featmat(path)))
    return members


def cmd_cascade(args) -> int:
    config_path = _require(args.config, "cascade config")
    config = ensemble.load_ensemble_config(config_path)
    for key in ("hcf", "deep", "labels"):
        if key not in config:
            raise InputError(f"cascade config missing field: {key}")
    base = config_path.parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = featstore.read_labels(_require(base / config["labels"], "labels file"))
    hcf = _load_member_group(config["hcf"], base)
    deep = _load_member_group(config["deep"], base)
    for name, matrix in hcf + deep:
        featstore.check_alignment(matrix, labels)
    cfg = _train_config(args)
    fold_assignment = dataset.make_folds(len(labels), labels, args.folds, args.seed).assignment
    pca_on = args.pca == "on"

    def member_probs(name, matrix, kind, offset):
        probs = ensemble.member_cv_probabilities(
            matrix.values,
            labels,
            fold_assignment,
            TrainConfig(
                lr=cfg.lr,
                momentum=cfg.momentum,
                max_epochs=cfg.max_epochs,
                batch_size=cfg.batch_size,
                seed=cfg.seed + offset,
                early_stop_patience=cfg.early_stop_patience,
            ),
            pca_kind=kind if pca_on else None,
        )
        return ensemble.ProbabilityMatrix(values=probs, source_id=name)

    hcf_probs = [
        member_probs(name, matrix, "handcrafted", 10 + i) for i, (name, matrix) in enumerate(hcf)
    ]
    dl_probs = [
        member_probs(name, matrix, "deep", 100 + i) for i, (name, matrix) in enumerate(deep)
    ]

    def member_weights(key, group):
        weights = config.get(key)
        if weights is None:
            return None
        if len(weights) != len(group):
            raise InputError(f"cascade config field {key}: expected {len(group)} weights")
        return weights

    result = ensemble.cascade_run(
        hcf_probs,
        dl_probs,
        labels,
        args.folds,
        cfg,
        hcf_weights=member_weights("hcf_weights", hcf),
        dl_weights=member_weights("deep_weights", deep),
    )
    _write_report(out_dir, "hf_ensemble", result.hf_report)
    _write_report(out_dir, "deep_ensemble", result.deep_report)
    _write_report(out_dir, "combined_ensemble", result.combined_report)
    for name, probs in result.stage_probs.items():
        featstore.write_featmat(probs, name, out_dir / f"{name}.probs.featmat")
    _write_run_config(out_dir, "cascade", vars(args))
    for name, report in (
        ("hf_ensemble", result.hf_report),
        ("deep_ensemble", result.deep_report),
        ("combined_ensemble", result.combined_report),
    ):
        print(report.csv_row(name))
    return 0


def cmd_concat(args) -> int:
    features_dir = _require(args.features_dir, "features directory")
    labels = featstore.read_labels(_require(args.labels, "labels file"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tokens = [t.strip() for t in args.sets.split(",") if t.strip()]
    if not tokens:
        raise InputError("--sets must name at least one feature set")
    named, kinds = [], {}
    for token in tokens:
        if token == "hcf":
            for name in descriptors.DESCRIPTOR_ORDER:
                path = _require(features_dir / f"{name}.featmat", f"feature file {name}")
                named.append((name, featstore.read_featmat(path)))
                kinds[name] = "handcrafted"
        elif token == "deep":
            deep_names = sorted(
                p.stem for p in features_dir.glob("*.featmat")
                if p.stem not in descriptors.DESCRIPTOR_DIMS
                and p.stem != "bovw_codebook"
                and not p.stem.endswith("_probs")
            )
            if not deep_names:
                raise DependencyError(f"no deep feature files under {features_dir}")
            for name in deep_names:
                named.append((name, featstore.read_featmat(features_dir / f"{name}.featmat")))
                kinds[name] = "deep"
        else:
            path = _require(features_dir / f"{token}.featmat", f"feature file {token}")
            named.append((token, featstore.read_featmat(path)))
            kinds[token] = "handcrafted" if token in descriptors.DESCRIPTOR_DIMS else "deep"
    for name, matrix in named:
        featstore.check_alignment(matrix, labels)
    cfg = _train_config(args)
    report, width = ensemble.concat_run(
        named, labels, kinds if args.pca == "on" else None, args.folds, cfg
    )
    _write_report(out_dir, "concat", report)
    summary = {"sets": tokens, "pca": args.pca, "feature_width": width}
    (out_dir / "concat.summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    _write_run_config(out_dir, "concat", vars(args))
    print(f"concat width {width}: " + report.csv_row("+".join(tokens)))
    return 0


def cmd_select_classifier(args) -> int:
    features_dir = _require(args.features_dir, "features directory")
    labels = featstore.read_labels(_require(args.labels, "labels file"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrices = {}
    for path in sorted(features_dir.glob("*.featmat")):
        if path.stem == "bovw_codebook":
            continue
        matrix = featstore.read_featmat(path)
        featstore.check_alignment(matrix, labels)
        matrices[path.stem] = matrix.values
    cfg = _train_config(args)

    def mlp_clf(X_tr, y_tr, X_te):
        split = dataset.make_splits(len(y_tr), y_tr, (0.85, 0.075, 0.075), seed=cfg.seed)
        tr = split.assignment == 0
        model = mlp_train(X_tr[tr], y_tr[tr], X_tr[~tr], y_tr[~tr], cfg)
        return mlp_predict_proba(model, X_te)

    classifiers = {
        "mlp": mlp_clf,
        "knn": lambda X_tr, y_tr, X_te: knn_predict(X_tr, y_tr, X_te, k=min(5, len(y_tr))),
        "tree": lambda X_tr, y_tr, X_te: tree_predict(tree_train(X_tr, y_tr), X_te),
    }
    rows, cols, table = classifier_selection(
        matrices, labels, classifiers, folds=args.folds, seed=args.seed
    )
    lines = ["descriptor," + ",".join(cols)]
    for i, name in enumerate(rows):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in table[i]))
    (out_dir / "classifier_loss.csv").write_text("\n".join(lines) + "\n")
    series = {col: table[:, j].tolist() for j, col in enumerate(cols)}
    (out_dir / "classifier_loss.svg").write_text(
        svgplot.line_plot(series, rows, title="classifier loss by descriptor")
    )
    _write_run_config(out_dir, "select-classifier", vars(args))
    print(f"wrote {len(rows)}x{len(cols)} loss table")
    return 0


def cmd_histograms(args) -> int:
    probs_path = _require(args.probs, "probability file")
    labels = featstore.read_labels(_require(args.labels, "labels file"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = featstore.read_featmat(probs_path)
    featstore.check_alignment(matrix, labels)
    edges, counts = ensemble.probability_histograms(matrix.values, labels, bins=args.bins)
    (out_dir / "probability_histograms.csv").write_text(ensemble.histogram_csv(edges, counts))
    titles = [f"class {c}" for c in range(counts.shape[0])]
    (out_dir / "probability_histograms.svg").write_text(
        svgplot.histogram_grid(edges, counts, titles, title="predicted probability by true class")
    )
    _write_run_config(out_dir, "histograms", vars(args))
    print(f"wrote histograms for {counts.shape[0]} classes, {args.bins} bins")
    return 0


def _add_train_flags(parser):
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--momentum", type=float, default=0.95)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--patience", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nucleifuse")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract labeled patches from annotated images")
    p.add_argument("--format", choices=("crchisto", "consep"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("balance", help="ADASYN-balance a patch archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-neighbors", type=int, default=5)
    p.set_defaults(fn=cmd_balance)

    p = sub.add_parser("features", help="compute descriptor feature files")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--desc", default="")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("reduce", help="PCA-project a feature file")
    p.add_argument("--featmat", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--kind", choices=("handcrafted", "deep"), default="handcrafted")
    p.set_defaults(fn=cmd_reduce)

    p = sub.add_parser("train", help="train the MLP on a feature file")
    p.add_argument("--featmat", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("cascade", help="run the probability-pooling cascade")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5, choices=(2, 5, 10))
    p.add_argument("--pca", choices=("on", "off"), default="on")
    _add_train_flags(p)
    p.set_defaults(fn=cmd_cascade)

    p = sub.add_parser("concat", help="run the feature-concatenation ensemble")
    p.add_argument("--sets", required=True)
    p.add_argument("--features-dir", required=True, type=Path)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5, choices=(2, 5, 10))
    p.add_argument("--pca", choices=("on", "off"), default="on")
    _add_train_flags(p)
    p.set_defaults(fn=cmd_concat)

    p = sub.add_parser("select-classifier", help="classifier-vs-loss table")
    p.add_argument("--features-dir", required=True, type=Path)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=2)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_select_classifier)

    p = sub.add_parser("histograms", help="per-class probability histograms")
    p.add_argument("--probs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(fn=cmd_histograms)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputError, NucleifuseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
