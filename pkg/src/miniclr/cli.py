"""Command-line experiment runner.

Verbs:
    pretrain-ae     train the autoencoder embeddings and save checkpoints
    train           run a single cell (all grid axes must be singletons)
    evaluate        linear-probe a saved backbone checkpoint
    grid            pretraining stage + full sweep + CSV + stats + figures
    frozen-compare  paired frozen/non-frozen transplant runs
    stats           stats table + figures from an existing results CSV

Every verb accepts --config, --out-dir, --seed, and --threads. The process
exits 0 only when every executed cell succeeded.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import GridConfig, enumerate_cells, load_config
from .runner import frozen_comparison, load_dataset, pretrain_autoencoders, run_grid


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config (defaults to the desk preset)")
    parser.add_argument("--out-dir", default="out", help="directory for artifacts and CSVs")
    parser.add_argument("--seed", type=int, default=None, help="override the config's seed list")
    parser.add_argument("--threads", type=int, default=1, help="worker pool size for grid cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miniclr", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for verb in ("pretrain-ae", "train", "grid", "frozen-compare"):
        _add_common(sub.add_parser(verb))
    evaluate = sub.add_parser("evaluate")
    _add_common(evaluate)
    evaluate.add_argument("--checkpoint", required=True, help="backbone .nta checkpoint to probe")
    stats = sub.add_parser("stats")
    _add_common(stats)
    stats.add_argument("--csv", default=None, help="results CSV (defaults to <out-dir>/results.csv)")
    return parser


def _load(args) -> GridConfig:
    cfg = load_config(args.config) if args.config else load_config({})
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    return cfg


def _cmd_pretrain_ae(args) -> int:
    cfg = _load(args)
    paths = pretrain_autoencoders(cfg, Path(args.out_dir))
    for latent, path in sorted(paths.items()):
        print(f"latent {latent}: {path}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load(args)
    cells = enumerate_cells(cfg)
    if len(cells) != 1:
        print(
            f"train expects a config whose grid is a single cell, got {len(cells)}",
            file=sys.stderr,
        )
        return 2
    records = run_grid(cfg, Path(args.out_dir), threads=args.threads, cells=cells)
    return _finish(records)


def _cmd_grid(args) -> int:
    cfg = _load(args)
    records = run_grid(cfg, Path(args.out_dir), threads=args.threads)
    return _finish(records)


def _cmd_frozen_compare(args) -> int:
    cfg = _load(args)
    records = frozen_comparison(cfg, Path(args.out_dir), threads=args.threads)
    return _finish(records)


def _cmd_evaluate(args) -> int:
    from .config import parse_cell
    from .container import load_container
    from .data import SplitSpec, split
    from .nn import Conv2dLayer, DenseLayer
    from .runner import evaluate_backbone
    from .simclr import BackboneSpec, build_backbone
    from .tensor import Rng

    cfg = _load(args)
    tensors, meta = load_container(args.checkpoint)
    ds = load_dataset(cfg)
    _, _, test_ds = split(ds, SplitSpec(seed=cfg.split_seed))

    backbone = build_backbone(
        BackboneSpec(kind=cfg.backbone.kind, width=cfg.backbone.width), test_ds.resolution, Rng(0)
    )
    for i, layer in enumerate(backbone.layers):
        if isinstance(layer, DenseLayer):
            layer.weight.value[...] = tensors[f"backbone.{i}.weight"]
            layer.bias.value[...] = tensors[f"backbone.{i}.bias"]
        elif isinstance(layer, Conv2dLayer):
            layer.kernels.value[...] = tensors[f"backbone.{i}.weight"]
            layer.bias.value[...] = tensors[f"backbone.{i}.bias"]
    cell = parse_cell(meta["cell"])
    stats = None
    if cell.normalized:
        from .data import compute_norm_stats

        train_ds, _, _ = split(ds, SplitSpec(seed=cfg.split_seed))
        stats = compute_norm_stats(train_ds)
    probe = evaluate_backbone(backbone, test_ds, cell, cfg, norm_stats=stats)
    print(f"acc1 {probe.acc1!r} best_epoch {probe.best_epoch}")
    return 0


def _cmd_stats(args) -> int:
    from .report import write_report

    csv_path = Path(args.csv) if args.csv else Path(args.out_dir) / "results.csv"
    if not csv_path.exists():
        print(f"no results CSV at {csv_path}", file=sys.stderr)
        return 2
    stats_path = write_report(csv_path, Path(args.out_dir))
    print(f"stats: {stats_path}")
    return 0


def _finish(records) -> int:
    failures = [r for r in records if r.status != "ok"]
    for record in failures:
        print(f"{record.cell}: {record.status}", file=sys.stderr)
    print(f"{len(records) - len(failures)}/{len(records)} cells succeeded")
    return 1 if failures else 0


_COMMANDS = {
    "pretrain-ae": _cmd_pretrain_ae,
    "train": _cmd_train,
    "grid": _cmd_grid,
    "frozen-compare": _cmd_frozen_compare,
    "evaluate": _cmd_evaluate,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
