"""Experiment grid configuration: JSON schema, presets, and cell enumeration.

A config is a JSON object with explicit grid arrays plus a "scale" preset
("desk" or "paper") that fills defaults; unknown keys are rejected. The
desk preset shrinks every width while keeping the grid structure: 2
projector kinds x 3 input widths x 4 activations x 3 projection widths x
2 normalization settings = 144 cells per dataset (and per seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

ACTIVATIONS = ("relu", "silu", "sigmoid", "tanh")
PROJECTOR_KINDS = ("ae", "mlp")

_PRESETS = {
    "desk": {
        "dim_g": [16, 32, 64],
        "dim_z": [8, 16, 32],
        "epochs": 30,
        "batch_size": 64,
        "backbone": {"kind": "tiny_conv", "width": 64},
        "dataset": {"name": "blobs", "num_classes": 4, "per_class": 150, "resolution": 16, "seed": 0},
    },
    "paper": {
        "dim_g": [128, 256, 512],
        "dim_z": [32, 64, 128],
        "epochs": 150,
        "batch_size": 1280,
        "backbone": {"kind": "tiny_conv", "width": 512},
        "dataset": {"name": "blobs", "num_classes": 10, "per_class": 1000, "resolution": 32, "seed": 0},
    },
}

_DATASET_KEYS = {"name", "num_classes", "per_class", "resolution", "seed", "path"}
_BACKBONE_KEYS = {"kind", "width"}
_AE_KEYS = {"epochs", "batch_size", "lr", "patience", "factor", "seed", "normalize"}
_PROBE_KEYS = {"epochs", "lr", "batch_size"}
_TOP_KEYS = {
    "scale",
    "dataset",
    "split_seed",
    "seeds",
    "projectors",
    "dim_g",
    "activations",
    "dim_z",
    "normalized",
    "epochs",
    "batch_size",
    "temperature",
    "weight_decay",
    "momentum",
    "backbone",
    "ae",
    "probe",
}


@dataclass(frozen=True)
class ExperimentCell:
    """One grid point; (mlp, frozen=True) is not a valid combination."""

    dataset: str
    projector: str
    dim_g: int
    activation: str
    dim_z: int
    normalized: bool
    frozen: bool
    seed: int

    def __post_init__(self):
        if self.projector not in PROJECTOR_KINDS:
            raise ValueError(f"unknown projector kind {self.projector!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.projector == "mlp" and self.frozen:
            raise ValueError("(mlp, frozen=true) is not a valid cell")


def render_cell(cell: ExperimentCell) -> dict[str, str]:
    """Cell as the string fields that appear in the results CSV."""
    return {
        "dataset": cell.dataset,
        "projector": cell.projector,
        "dim_g": str(cell.dim_g),
        "activation": cell.activation,
        "dim_z": str(cell.dim_z),
        "normalized": "true" if cell.normalized else "false",
        "frozen": "true" if cell.frozen else "false",
        "seed": str(cell.seed),
    }


def parse_cell(fields: dict[str, str]) -> ExperimentCell:
    """Inverse of render_cell."""
    flags = {}
    for key in ("normalized", "frozen"):
        value = fields[key].lower()
        if value not in ("true", "false"):
            raise ValueError(f"{key} must be true or false, got {value!r}")
        flags[key] = value == "true"
    return ExperimentCell(
        dataset=fields["dataset"],
        projector=fields["projector"],
        dim_g=int(fields["dim_g"]),
        activation=fields["activation"],
        dim_z=int(fields["dim_z"]),
        normalized=flags["normalized"],
        frozen=flags["frozen"],
        seed=int(fields["seed"]),
    )


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "blobs"
    num_classes: int = 4
    per_class: int = 150
    resolution: int = 16
    seed: int = 0
    path: str | None = None


@dataclass(frozen=True)
class BackboneConfig:
    kind: str = "tiny_conv"
    width: int = 64


@dataclass(frozen=True)
class AePretrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lr: float = 1e-4
    patience: int = 10
    factor: float = 0.5
    seed: int = 0
    normalize: bool = False


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 32


@dataclass(frozen=True)
class GridConfig:
    """Fully resolved experiment configuration."""

    scale: str = "desk"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split_seed: int = 0
    seeds: tuple[int, ...] = (0,)
    projectors: tuple[str, ...] = PROJECTOR_KINDS
    dim_g: tuple[int, ...] = (16, 32, 64)
    activations: tuple[str, ...] = ACTIVATIONS
    dim_z: tuple[int, ...] = (8, 16, 32)
    normalized: tuple[bool, ...] = (False, True)
    epochs: int = 30
    batch_size: int = 64
    temperature: float = 0.5
    weight_decay: float = 1e-5
    momentum: float = 0.9
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    ae: AePretrainConfig = field(default_factory=AePretrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown config key(s) in {where}: {sorted(unknown)}")


def load_config(source: dict | str | os.PathLike) -> GridConfig:
    """Build a GridConfig from a JSON file path or an already-parsed dict."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")

    scale = raw.get("scale", "desk")
    if scale not in _PRESETS:
        raise ValueError(f"unknown scale preset {scale!r}")
    preset = _PRESETS[scale]

    dataset_raw = {**preset["dataset"], **raw.get("dataset", {})}
    _check_keys(dataset_raw, _DATASET_KEYS, "dataset")
    backbone_raw = {**preset["backbone"], **raw.get("backbone", {})}
    _check_keys(backbone_raw, _BACKBONE_KEYS, "backbone")
    ae_raw = raw.get("ae", {})
    _check_keys(ae_raw, _AE_KEYS, "ae")
    probe_raw = raw.get("probe", {})
    _check_keys(probe_raw, _PROBE_KEYS, "probe")

    cfg = GridConfig(
        scale=scale,
        dataset=DatasetConfig(**dataset_raw),
        split_seed=int(raw.get("split_seed", 0)),
        seeds=tuple(int(s) for s in raw.get("seeds", [0])),
        projectors=tuple(raw.get("projectors", PROJECTOR_KINDS)),
        dim_g=tuple(int(v) for v in raw.get("dim_g", preset["dim_g"])),
        activations=tuple(raw.get("activations", ACTIVATIONS)),
        dim_z=tuple(int(v) for v in raw.get("dim_z", preset["dim_z"])),
        normalized=tuple(bool(v) for v in raw.get("normalized", [False, True])),
        epochs=int(raw.get("epochs", preset["epochs"])),
        batch_size=int(raw.get("batch_size", preset["batch_size"])),
        temperature=float(raw.get("temperature", 0.5)),
        weight_decay=float(raw.get("weight_decay", 1e-5)),
        momentum=float(raw.get("momentum", 0.9)),
        backbone=BackboneConfig(**backbone_raw),
        ae=AePretrainConfig(**ae_raw),
        probe=ProbeConfig(**probe_raw),
    )
    for kind in cfg.projectors:
        if kind not in PROJECTOR_KINDS:
            raise ValueError(f"unknown projector kind {kind!r}")
    for act in cfg.activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    if not cfg.seeds:
        raise ValueError("seeds must be non-empty")
    return cfg


def enumerate_cells(cfg: GridConfig) -> list[ExperimentCell]:
    """All grid cells in deterministic nested order.

    The frozen flag is not a grid axis: transplanted projectors run frozen
    (the paired non-frozen arm is covered by the frozen comparison).
    """
    cells = []
    for projector in cfg.projectors:
        for dim_g in cfg.dim_g:
            for activation in cfg.activations:
                for dim_z in cfg.dim_z:
                    for normalized in cfg.normalized:
                        for seed in cfg.seeds:
                            cells.append(
                                ExperimentCell(
                                    dataset=cfg.dataset.name,
                                    projector=projector,
                                    dim_g=dim_g,
                                    activation=activation,
                                    dim_z=dim_z,
                                    normalized=normalized,
                                    frozen=projector == "ae",
                                    seed=seed,
                                )
                            )
    return cells
