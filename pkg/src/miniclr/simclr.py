"""Backbone construction, both projector variants, and contrastive training.

The backbone maps augmented views to flat representations h; the projector
maps h to z, where the contrastive loss lives. The two projector kinds are
structurally identical two-layer MLPs: `mlp` is randomly initialized
throughout, `ae` transplants a pretrained (usually frozen) embedding layer
as its input layer. After training the projector is discarded from the
result; callers keep it only for checkpoint audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import TransformSpace, sample_pair
from .data import ImageDataset, NormStats, compute_norm_stats, normalize_images
from .losses import NTXentConfig, nt_xent
from .nn import Activation, AvgPool2dLayer, Conv2dLayer, DenseLayer, FlattenLayer, LayerStack, init_params
from .optim import CosineAnnealing, SgdMomentum, cosine_lr, initial_lr_from_batch
from .tensor import NumericsError, Rng, ShapeError, Tensor

MAX_PROJECTION_DIM = 128


@dataclass(frozen=True)
class BackboneSpec:
    """Feature extractor family and its output width."""

    kind: str = "tiny_conv"
    width: int = 64

    def __post_init__(self):
        if self.kind not in ("tiny_conv", "mlp"):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        if self.width < 1:
            raise ValueError("width must be positive")


@dataclass(frozen=True)
class ProjectorSpec:
    """Two-layer projection head configuration.

    `dim_g` is the output width of the input layer, `dim_z` the final
    projection width (capped at 128). `frozen` applies only to the `ae`
    kind's transplanted input layer.
    """

    kind: str
    input_width: int
    dim_g: int
    activation: str
    dim_z: int
    frozen: bool = True

    def __post_init__(self):
        if self.kind not in ("ae", "mlp"):
            raise ValueError(f"unknown projector kind {self.kind!r}")
        if self.kind == "mlp" and self.frozen:
            raise ValueError("a randomly initialized projector cannot be frozen")
        if self.dim_z > MAX_PROJECTION_DIM:
            raise ValueError(f"dim_z {self.dim_z} exceeds the {MAX_PROJECTION_DIM} cap")
        if min(self.input_width, self.dim_g, self.dim_z) < 1:
            raise ValueError("all projector widths must be positive")


@dataclass(frozen=True)
class SimclrConfig:
    """Contrastive-stage hyperparameters.

    The initial learning rate is 0.3 * batch_size / 256, annealed by a
    cosine schedule to a fiftieth of itself over `epochs` epochs.
    """

    epochs: int = 30
    batch_size: int = 64
    temperature: float = 0.5
    weight_decay: float = 1e-5
    momentum: float = 0.9
    normalize: bool = False
    seed: int = 0

    @property
    def initial_lr(self) -> float:
        return initial_lr_from_batch(self.batch_size)

    @property
    def eta_min(self) -> float:
        return self.initial_lr / 50.0


@dataclass
class TrainHistory:
    """Loss bookkeeping for one contrastive run."""

    step_losses: list[float] = field(default_factory=list)
    epoch_train_loss: list[float] = field(default_factory=list)
    epoch_val_loss: list[float] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)


@dataclass
class SimclrResult:
    """Trained backbone (the kept artifact) plus audit material."""

    backbone: LayerStack
    projector: LayerStack
    history: TrainHistory
    norm_stats: NormStats | None


def build_backbone(spec: BackboneSpec, resolution: int, rng: Rng) -> LayerStack:
    """Desk-scale feature extractor producing a flat width-W representation."""
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    if spec.kind == "tiny_conv":
        if resolution % 4:
            raise ShapeError("tiny_conv needs a resolution divisible by 4")
        flat = 8 * (resolution // 4) ** 2
        layers = [
            init_params(Conv2dLayer(3, 8, kernel_size=3, padding=1), rng.child("conv", 0)),
            Activation("relu"),
            AvgPool2dLayer(),
            init_params(Conv2dLayer(8, 8, kernel_size=3, padding=1), rng.child("conv", 1)),
            Activation("relu"),
            AvgPool2dLayer(),
            FlattenLayer(),
            init_params(DenseLayer(flat, spec.width), rng.child("head")),
        ]
    else:
        flat = 3 * resolution * resolution
        layers = [
            FlattenLayer(),
            init_params(DenseLayer(flat, 2 * spec.width), rng.child("dense", 0)),
            Activation("relu"),
            init_params(DenseLayer(2 * spec.width, spec.width), rng.child("dense", 1)),
        ]
    stack = LayerStack(layers)
    probe = stack.forward(np.zeros((1, 3, resolution, resolution)))
    if probe.shape != (1, spec.width):
        raise ShapeError(f"backbone produced width {probe.shape[1]}, expected {spec.width}")
    return stack


def build_projector(
    spec: ProjectorSpec, rng: Rng, embedding: DenseLayer | None = None
) -> LayerStack:
    """Assemble the projection head, transplanting the embedding for `ae`."""
    if spec.kind == "ae":
        if embedding is None:
            raise ValueError("ae projector requires a pretrained embedding layer")
        if embedding.weight.value.shape != (spec.dim_g, spec.input_width):
            raise ShapeError(
                f"embedding shape {embedding.weight.value.shape} does not match "
                f"({spec.dim_g}, {spec.input_width})"
            )
        input_layer = DenseLayer(spec.input_width, spec.dim_g, frozen=spec.frozen)
        input_layer.weight.value[...] = embedding.weight.value
        input_layer.bias.value[...] = embedding.bias.value
    else:
        input_layer = init_params(DenseLayer(spec.input_width, spec.dim_g), rng.child("proj", 0))
    output_layer = init_params(DenseLayer(spec.dim_g, spec.dim_z), rng.child("proj", 1))
    return LayerStack([input_layer, Activation(spec.activation), output_layer])


def _augment_batch(
    images: Tensor,
    indices: np.ndarray,
    space: TransformSpace,
    rng: Rng,
    epoch: int,
    stats: NormStats | None,
) -> Tensor:
    """Paired views for a batch: rows [0, N) are view i, rows [N, 2N) view j."""
    views_i, views_j = [], []
    for idx in indices:
        pair = sample_pair(images[idx], space, rng.child("aug", epoch, int(idx)), source=int(idx))
        views_i.append(pair.view_i)
        views_j.append(pair.view_j)
    batch = np.stack(views_i + views_j)
    if stats is not None:
        batch = normalize_images(batch, stats)
    return batch


def train_simclr(
    backbone: LayerStack,
    projector: LayerStack,
    train: ImageDataset,
    val: ImageDataset,
    cfg: SimclrConfig,
    space: TransformSpace,
) -> SimclrResult:
    """Joint contrastive training of backbone and (non-frozen) projector.

    Each step augments a fresh batch into 2N paired views, computes
    z = g(f(view)) and the contrastive loss over the pair layout, and
    applies one SGD-with-momentum update. The learning rate follows the
    cosine schedule once per epoch. Validation loss is monitored on one
    augmented batch of the validation split per epoch.
    """
    if cfg.batch_size < 2:
        raise ValueError("contrastive training needs a batch size of at least 2")
    if cfg.batch_size > len(train):
        raise ValueError(f"batch size {cfg.batch_size} exceeds train split size {len(train)}")

    stats = compute_norm_stats(train) if cfg.normalize else None
    params = backbone.parameters() + projector.parameters()
    frozen_before = [(p, p.value.copy()) for p in params if p.frozen]

    lr0 = cfg.initial_lr
    sched = CosineAnnealing(lr0, cfg.eta_min, cfg.epochs)
    opt = SgdMomentum(params, lr0, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    rng = Rng(cfg.seed)
    history = TrainHistory()
    n = len(train)
    steps = n // cfg.batch_size

    for epoch in range(cfg.epochs):
        opt.lr = cosine_lr(sched, epoch)
        history.lr_trace.append(opt.lr)
        order = rng.child("order", epoch).permutation(n)
        epoch_losses = []
        for step in range(steps):
            idx = order[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            batch = _augment_batch(train.images, idx, space, rng, epoch, stats)
            h = backbone.forward(batch, record=True)
            z = projector.forward(h, record=True)
            loss, dz = nt_xent(z, NTXentConfig(cfg.temperature, len(idx)))
            if not np.isfinite(loss):
                raise NumericsError(f"non-finite contrastive loss at epoch {epoch}")
            backbone.zero_grads()
            projector.zero_grads()
            backbone.backward(projector.backward(dz))
            opt.step()
            history.step_losses.append(loss)
            epoch_losses.append(loss)
        history.epoch_train_loss.append(float(np.mean(epoch_losses)))
        history.epoch_val_loss.append(
            _validation_loss(backbone, projector, val, cfg, space, rng, epoch, stats)
        )

    for p, before in frozen_before:
        if not np.array_equal(p.value, before):
            raise RuntimeError("frozen parameters were mutated during training")
    return SimclrResult(backbone=backbone, projector=projector, history=history, norm_stats=stats)


def _validation_loss(
    backbone: LayerStack,
    projector: LayerStack,
    val: ImageDataset,
    cfg: SimclrConfig,
    space: TransformSpace,
    rng: Rng,
    epoch: int,
    stats: NormStats | None,
) -> float:
    """Contrastive loss on one augmented validation batch (monitoring only)."""
    n_val = min(cfg.batch_size, len(val))
    if n_val < 2:
        return float("nan")
    order = rng.child("val-order", epoch).permutation(len(val))[:n_val]
    batch = _augment_batch(val.images, order, space, rng.child("val"), epoch, stats)
    z = projector.forward(backbone.forward(batch))
    loss, _ = nt_xent(z, NTXentConfig(cfg.temperature, n_val))
    return loss
