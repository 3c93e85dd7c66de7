"""Grid execution: autoencoder pretraining stage, per-cell training and
evaluation, CSV emission, and the frozen-vs-non-frozen comparison.

Cells are independent: every random stream is derived from the cell's own
fields, so results do not depend on execution order or worker count, and a
rerun with the same config reproduces the CSV bit for bit apart from the
wall-time column. One failing cell is recorded with an error status and
the sweep continues.
"""

from __future__ import annotations

import csv
import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .augment import TransformSpace
from .autoencoder import AutoencoderSpec, build_autoencoder, train_autoencoder
from .config import ExperimentCell, GridConfig, render_cell
from .container import load_container, save_container
from .data import (
    ImageDataset,
    SplitSpec,
    apply_zscore,
    compute_norm_stats,
    load_cifar_binary,
    load_packed,
    split,
    synth_blobs,
)
from .evaluate import ProbeResult, extract_features, train_probe
from .nn import Conv2dLayer, DenseLayer, LayerStack
from .simclr import BackboneSpec, ProjectorSpec, SimclrConfig, build_projector, build_backbone, train_simclr
from .tensor import Rng

CSV_HEADER = [
    "dataset",
    "projector",
    "dim_g",
    "activation",
    "dim_z",
    "normalized",
    "frozen",
    "seed",
    "acc1",
    "best_epoch",
    "final_loss",
    "wall_seconds",
    "status",
]


@dataclass
class RunRecord:
    """One CSV row: the cell, its outcome, and where the artifacts live."""

    cell: ExperimentCell
    acc1: float | None = None
    best_epoch: int | None = None
    final_loss: float | None = None
    wall_seconds: float = 0.0
    status: str = "ok"
    artifacts: dict[str, Path] = field(default_factory=dict)

    def to_row(self) -> list[str]:
        fields = render_cell(self.cell)
        return [
            fields["dataset"],
            fields["projector"],
            fields["dim_g"],
            fields["activation"],
            fields["dim_z"],
            fields["normalized"],
            fields["frozen"],
            fields["seed"],
            "" if self.acc1 is None else repr(self.acc1),
            "" if self.best_epoch is None else str(self.best_epoch),
            "" if self.final_loss is None else repr(self.final_loss),
            f"{self.wall_seconds:.3f}",
            self.status,
        ]


def cell_hash(cell: ExperimentCell) -> str:
    """Stable 12-hex-digit id used to namespace a cell's artifact paths."""
    payload = ",".join(f"{k}={v}" for k, v in sorted(render_cell(cell).items()))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def load_dataset(cfg: GridConfig) -> ImageDataset:
    """Materialize the configured dataset (synthetic by default)."""
    ds_cfg = cfg.dataset
    if ds_cfg.name == "blobs":
        return synth_blobs(ds_cfg.num_classes, ds_cfg.per_class, ds_cfg.resolution, Rng(ds_cfg.seed))
    if ds_cfg.name == "cifar10":
        if not ds_cfg.path:
            raise ValueError("cifar10 dataset requires a path to the binary batch file")
        return load_cifar_binary(ds_cfg.path)
    if ds_cfg.path:
        return load_packed(ds_cfg.path)
    raise ValueError(f"unknown dataset {ds_cfg.name!r} (and no path given)")


def ae_checkpoint_path(out_dir: Path, cfg: GridConfig, latent_dim: int) -> Path:
    return out_dir / "ae" / f"{cfg.dataset.name}_latent{latent_dim}.nta"


def pretrain_autoencoders(
    cfg: GridConfig, out_dir: Path, latent_dims=None, fail_soft: bool = False
) -> dict[int, Path]:
    """Train one autoencoder per projector input width and save checkpoints.

    Pretraining runs on the un-normalized train split by default; the
    normalize switch exists only to reproduce the documented failure mode
    of Z-scored reconstruction targets. With fail_soft, a width whose
    pretraining fails is skipped so its cells can report the error
    individually.
    """
    out_dir = Path(out_dir)
    ds = load_dataset(cfg)
    train_ds, val_ds, _ = split(ds, SplitSpec(seed=cfg.split_seed))
    if cfg.ae.normalize:
        stats = compute_norm_stats(train_ds)
        train_ds = apply_zscore(train_ds, stats)
        val_ds = apply_zscore(val_ds, stats)
    train_x = train_ds.images.reshape(len(train_ds), -1)
    val_x = val_ds.images.reshape(len(val_ds), -1)

    paths: dict[int, Path] = {}
    for latent in latent_dims if latent_dims is not None else cfg.dim_g:
        try:
            paths[latent] = _pretrain_one(cfg, out_dir, latent, train_x, val_x)
        except Exception:
            if not fail_soft:
                raise
    return paths


def _pretrain_one(cfg: GridConfig, out_dir: Path, latent: int, train_x, val_x) -> Path:
    path = ae_checkpoint_path(out_dir, cfg, latent)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = AutoencoderSpec(
        input_dim=train_x.shape[1], hidden_dim=cfg.backbone.width, latent_dim=latent
    )
    rng = Rng(cfg.ae.seed).child("ae", latent)
    ae = build_autoencoder(spec, rng)
    best, report = train_autoencoder(
        ae,
        train_x,
        val_x,
        epochs=cfg.ae.epochs,
        batch_size=cfg.ae.batch_size,
        lr=cfg.ae.lr,
        plateau_patience=cfg.ae.patience,
        plateau_factor=cfg.ae.factor,
        rng=rng.child("train"),
    )
    tensors = {}
    for prefix, stack in (("encoder", best.encoder), ("decoder", best.decoder)):
        dense = [layer for layer in stack.layers if isinstance(layer, DenseLayer)]
        for i, layer in enumerate(dense):
            tensors[f"{prefix}.{i}.weight"] = layer.weight.value
            tensors[f"{prefix}.{i}.bias"] = layer.bias.value
    save_container(
        path,
        tensors,
        metadata={
            "spec": {
                "input_dim": spec.input_dim,
                "hidden_dim": spec.hidden_dim,
                "latent_dim": spec.latent_dim,
                "activation": spec.activation,
            },
            "best_epoch": report.best_epoch,
            "best_val": report.best_val,
        },
    )
    return path


def load_embedding_layer(path: Path) -> DenseLayer:
    """Reconstruct the frozen embedding layer from an autoencoder checkpoint."""
    tensors, _ = load_container(path)
    weight = tensors["encoder.1.weight"]
    bias = tensors["encoder.1.bias"]
    layer = DenseLayer(weight.shape[1], weight.shape[0], frozen=True)
    layer.weight.value[...] = weight
    layer.bias.value[...] = bias
    return layer


def _save_stack(path: Path, prefix: str, stack: LayerStack, metadata: dict) -> None:
    tensors = {}
    for i, layer in enumerate(stack.layers):
        if isinstance(layer, DenseLayer):
            tensors[f"{prefix}.{i}.weight"] = layer.weight.value
            tensors[f"{prefix}.{i}.bias"] = layer.bias.value
        elif isinstance(layer, Conv2dLayer):
            tensors[f"{prefix}.{i}.weight"] = layer.kernels.value
            tensors[f"{prefix}.{i}.bias"] = layer.bias.value
    save_container(path, tensors, metadata=metadata)


def run_cell(cell: ExperimentCell, cfg: GridConfig, data, ae_paths: dict[int, Path], out_dir: Path) -> RunRecord:
    """Train and evaluate one grid cell; exceptions become an error status."""
    record = RunRecord(cell=cell)
    started = time.perf_counter()
    try:
        train_ds, val_ds, test_ds = data
        cell_dir = Path(out_dir) / "cells" / cell_hash(cell)
        cell_dir.mkdir(parents=True, exist_ok=True)

        rng = Rng(cell.seed)
        backbone_spec = BackboneSpec(kind=cfg.backbone.kind, width=cfg.backbone.width)
        backbone = build_backbone(backbone_spec, train_ds.resolution, rng.child("backbone"))
        embedding = None
        if cell.projector == "ae":
            if cell.dim_g not in ae_paths:
                raise ValueError(f"no pretrained embedding checkpoint for width {cell.dim_g}")
            embedding = load_embedding_layer(ae_paths[cell.dim_g])
            embedding.frozen = cell.frozen
        proj_spec = ProjectorSpec(
            kind=cell.projector,
            input_width=cfg.backbone.width,
            dim_g=cell.dim_g,
            activation=cell.activation,
            dim_z=cell.dim_z,
            frozen=cell.frozen,
        )
        projector = build_projector(proj_spec, rng.child("projector"), embedding=embedding)
        sim_cfg = SimclrConfig(
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            temperature=cfg.temperature,
            weight_decay=cfg.weight_decay,
            momentum=cfg.momentum,
            normalize=cell.normalized,
            seed=cell.seed,
        )
        result = train_simclr(backbone, projector, train_ds, val_ds, sim_cfg, TransformSpace())

        meta = {
            "cell": render_cell(cell),
            "projector_spec": asdict(proj_spec),
            "simclr_config": asdict(sim_cfg),
            "backbone_spec": asdict(backbone_spec),
        }
        backbone_path = cell_dir / "backbone.nta"
        projector_path = cell_dir / "projector.nta"
        _save_stack(backbone_path, "backbone", result.backbone, meta)
        _save_stack(projector_path, "projector", result.projector, meta)
        history_path = cell_dir / "loss_history.csv"
        with open(history_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for e, (tr, va, lr) in enumerate(
                zip(result.history.epoch_train_loss, result.history.epoch_val_loss, result.history.lr_trace),
                start=1,
            ):
                writer.writerow([e, repr(tr), repr(va), repr(lr)])

        probe = evaluate_backbone(result.backbone, test_ds, cell, cfg, norm_stats=result.norm_stats)
        record.acc1 = probe.acc1
        record.best_epoch = probe.best_epoch
        record.final_loss = result.history.epoch_train_loss[-1]
        record.artifacts = {
            "backbone": backbone_path,
            "projector": projector_path,
            "loss_history": history_path,
        }
    except Exception as exc:  # fail-soft: record and keep sweeping
        record.status = f"error: {type(exc).__name__}: {exc}"
    record.wall_seconds = time.perf_counter() - started
    return record


def evaluate_backbone(
    backbone: LayerStack,
    test_ds: ImageDataset,
    cell: ExperimentCell,
    cfg: GridConfig,
    norm_stats=None,
) -> ProbeResult:
    """Features from the test split, re-split 70/10/20, linear probe."""
    eval_ds = apply_zscore(test_ds, norm_stats) if norm_stats is not None else test_ds
    features = extract_features(backbone, eval_ds, provenance=cell_hash(cell))
    return train_probe(
        features,
        SplitSpec(seed=cell.seed),
        epochs=cfg.probe.epochs,
        learning_rate=cfg.probe.lr,
        batch_size=cfg.probe.batch_size,
    )


def write_records_csv(path: Path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.to_row())


def _execute_cells(cells, cfg, data, ae_paths, out_dir, threads) -> list[RunRecord]:
    if threads <= 1:
        return [run_cell(cell, cfg, data, ae_paths, out_dir) for cell in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_cell, cell, cfg, data, ae_paths, out_dir) for cell in cells]
        return [f.result() for f in futures]


def run_grid(cfg: GridConfig, out_dir, threads: int = 1, cells=None) -> list[RunRecord]:
    """Pretraining stage, every grid cell, results CSV, and stats report."""
    from .config import enumerate_cells
    from .report import write_report

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = enumerate_cells(cfg) if cells is None else list(cells)

    ae_dims = sorted({c.dim_g for c in cells if c.projector == "ae"})
    ae_paths = (
        pretrain_autoencoders(cfg, out_dir, latent_dims=ae_dims, fail_soft=True)
        if ae_dims
        else {}
    )

    ds = load_dataset(cfg)
    data = split(ds, SplitSpec(seed=cfg.split_seed))
    records = _execute_cells(cells, cfg, data, ae_paths, out_dir, threads)
    write_records_csv(out_dir / "results.csv", records)
    write_report(out_dir / "results.csv", out_dir)
    return records


def frozen_comparison(cfg: GridConfig, out_dir, threads: int = 1) -> list[RunRecord]:
    """Paired frozen/non-frozen transplant runs, sigmoid and no Z-score.

    Both arms of a pair share the cell seed, hence identical initial
    weights; only the freeze flag differs. Writes the paired rows plus a
    per-arm max/average aggregate CSV.
    """
    from .evaluate import summarize
    from .report import write_figures

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = []
    for dim_g in cfg.dim_g:
        for dim_z in cfg.dim_z:
            for seed in cfg.seeds:
                for frozen in (True, False):
                    cells.append(
                        ExperimentCell(
                            dataset=cfg.dataset.name,
                            projector="ae",
                            dim_g=dim_g,
                            activation="sigmoid",
                            dim_z=dim_z,
                            normalized=False,
                            frozen=frozen,
                            seed=seed,
                        )
                    )
    ae_paths = pretrain_autoencoders(cfg, out_dir, latent_dims=sorted({c.dim_g for c in cells}))
    ds = load_dataset(cfg)
    data = split(ds, SplitSpec(seed=cfg.split_seed))
    records = _execute_cells(cells, cfg, data, ae_paths, out_dir, threads)
    write_records_csv(out_dir / "frozen_comparison.csv", records)

    with open(out_dir / "frozen_comparison_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "max_acc1", "avg_acc1", "count"])
        for frozen in (True, False):
            accs = [r.acc1 for r in records if r.cell.frozen is frozen and r.acc1 is not None]
            if accs:
                stats = summarize(accs)
                writer.writerow(
                    ["frozen" if frozen else "not_frozen", repr(stats.maximum), repr(stats.average), len(accs)]
                )
    write_figures(out_dir / "frozen_comparison.csv", out_dir)
    return records
