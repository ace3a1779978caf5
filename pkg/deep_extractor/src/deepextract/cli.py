"""CLI: fine-tune one net per invocation and export its features.

Exit codes: 0 success, 2 bad input, 4 missing artifact or pretrained weights.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .archive import ArchiveError, read_archive
from .export import export_features
from .finetune import FinetuneConfig, finetune, load_checkpoint, save_checkpoint
from .nets import NET_SPECS, MissingWeightsError


def cmd_finetune(args) -> int:
    pixels, labels, _manifest = read_archive(args.archive)
    cfg = FinetuneConfig(
        lr=args.lr,
        momentum=args.momentum,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        head_only=args.head_only,
        pretrained=not args.no_pretrained,
    )
    model, info = finetune(pixels, labels, args.net, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, args.net, args.out)
    final = info["history"][-1] if info["history"] else None
    print(f"{args.net}: trained {len(info['history'])} epochs, last val loss {final}")
    return 0


def cmd_export(args) -> int:
    pixels, labels, _manifest = read_archive(args.archive)
    model, net_name = load_checkpoint(args.checkpoint)
    paths = export_features(model, net_name, pixels, labels, args.out_dir,
                            batch_size=args.batch_size)
    print(f"{net_name}: wrote {paths['features'].name} and {paths['probs'].name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepextract")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("finetune", help="fine-tune a net's 4-way head on an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--net", required=True, choices=sorted(NET_SPECS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--momentum", type=float, default=0.95)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--head-only", action="store_true")
    p.add_argument("--no-pretrained", action="store_true")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("export", help="export features + probabilities as FEATMAT")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ArchiveError, FileNotFoundError, MissingWeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
