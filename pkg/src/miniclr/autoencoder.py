"""The 4-layer dense autoencoder whose embedding layer seeds the projector.

The encoder is Dense(m -> hidden) + activation + Dense(hidden -> latent);
the decoder mirrors it. The hidden width is chosen to match the backbone
output width so the encoder's final layer can later replace the projector
input layer. Training minimizes reconstruction MSE with Adam and a
reduce-on-plateau schedule, and only the best validation checkpoint is
kept.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .losses import mse, mse_grad
from .nn import Activation, DenseLayer, LayerStack, init_params
from .optim import Adam, ReduceOnPlateau, plateau_update
from .tensor import NumericsError, Rng, Tensor


@dataclass(frozen=True)
class AutoencoderSpec:
    """Widths and hidden activation of the encoder/decoder pair."""

    input_dim: int
    hidden_dim: int
    latent_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim < self.latent_dim:
            raise ValueError(
                f"input_dim {self.input_dim} must be >= latent_dim {self.latent_dim}"
            )
        if min(self.input_dim, self.hidden_dim, self.latent_dim) < 1:
            raise ValueError("all widths must be positive")


@dataclass
class Autoencoder:
    spec: AutoencoderSpec
    encoder: LayerStack
    decoder: LayerStack

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()


@dataclass
class TrainReport:
    """Per-epoch losses plus which checkpoint was kept."""

    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")


def build_autoencoder(spec: AutoencoderSpec, rng: Rng) -> Autoencoder:
    """Construct and Glorot-initialize the mirrored encoder/decoder stacks."""
    encoder = LayerStack(
        [
            init_params(DenseLayer(spec.input_dim, spec.hidden_dim), rng.child("enc", 0)),
            Activation(spec.activation),
            init_params(DenseLayer(spec.hidden_dim, spec.latent_dim), rng.child("enc", 1)),
        ]
    )
    decoder = LayerStack(
        [
            init_params(DenseLayer(spec.latent_dim, spec.hidden_dim), rng.child("dec", 0)),
            Activation(spec.activation),
            init_params(DenseLayer(spec.hidden_dim, spec.input_dim), rng.child("dec", 1)),
        ]
    )
    return Autoencoder(spec=spec, encoder=encoder, decoder=decoder)


def reconstruct(ae: Autoencoder, x: Tensor) -> Tensor:
    """Decode the encoding of `x`; accepts a single vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    out = ae.decoder.forward(ae.encoder.forward(batch))
    return out[0] if single else out


def train_autoencoder(
    ae: Autoencoder,
    train_x: Tensor,
    val_x: Tensor,
    *,
    epochs: int = 100,
    batch_size: int = 100,
    lr: float = 1e-4,
    plateau_patience: int = 10,
    plateau_factor: float = 0.5,
    rng: Rng,
) -> tuple[Autoencoder, TrainReport]:
    """Minimize reconstruction MSE; return the best-validation snapshot.

    Inputs are flattened sample vectors of length `input_dim`. The plateau
    scheduler monitors validation MSE once per epoch. The returned model is
    the parameter snapshot from the epoch with the smallest validation MSE,
    not the final one.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    val_x = np.asarray(val_x, dtype=np.float64)
    if train_x.ndim != 2 or train_x.shape[1] != ae.spec.input_dim:
        raise ValueError(f"train data must be (n, {ae.spec.input_dim}), got {train_x.shape}")
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("train and validation splits must be non-empty")

    opt = Adam(ae.parameters(), lr=lr)
    sched = ReduceOnPlateau(patience=plateau_patience, factor=plateau_factor)
    report = TrainReport()
    best: Autoencoder | None = None
    n = len(train_x)

    for epoch in range(1, epochs + 1):
        order = rng.child("epoch", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            batch = train_x[order[start : start + batch_size]]
            z = ae.encoder.forward(batch, record=True)
            recon = ae.decoder.forward(z, record=True)
            loss = mse(batch, recon)
            if not np.isfinite(loss):
                raise NumericsError(f"non-finite reconstruction loss at epoch {epoch}")
            ae.encoder.zero_grads()
            ae.decoder.zero_grads()
            grad = ae.decoder.backward(mse_grad(batch, recon))
            ae.encoder.backward(grad)
            opt.step()
            epoch_losses.append(loss)
        report.train_mse.append(float(np.mean(epoch_losses)))

        val_loss = mse(val_x, reconstruct(ae, val_x))
        report.val_mse.append(val_loss)
        if val_loss < report.best_val:
            report.best_val = val_loss
            report.best_epoch = epoch
            best = copy.deepcopy(ae)
        opt.lr = plateau_update(sched, val_loss, opt.lr)

    assert best is not None
    return best, report


def extract_embedding_layer(ae: Autoencoder) -> DenseLayer:
    """Deep copy of the encoder's final dense layer, returned frozen."""
    source = ae.encoder.layers[-1]
    assert isinstance(source, DenseLayer)
    layer = DenseLayer(source.in_features, source.out_features, frozen=True)
    layer.weight.value[...] = source.weight.value
    layer.bias.value[...] = source.bias.value
    return layer
