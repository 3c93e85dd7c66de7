"""Representation evaluation: feature extraction, the linear probe, Acc@1,
and summary statistics of accuracy distributions.

Features are backbone outputs with the projector discarded and no
augmentation. The probe is a single dense layer trained with softmax
cross-entropy on a fresh 70/10/20 split of the feature dataset; reported
Acc@1 is the peak test-split accuracy across probe epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import ImageDataset, SplitSpec, split_indices
from .losses import softmax_cross_entropy
from .nn import DenseLayer, LayerStack, init_params
from .optim import Adam
from .tensor import Rng, Tensor


@dataclass
class FeatureDataset:
    """Backbone representations with labels and their source model id."""

    features: Tensor
    labels: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features must be (n, width) with n labels, got {self.features.shape}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class ProbeResult:
    """Peak test accuracy and the curves behind it."""

    acc1: float
    best_epoch: int
    train_loss: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 32


@dataclass(frozen=True)
class SummaryStats:
    """Dispersion summary of a set of accuracies."""

    minimum: float
    maximum: float
    average: float
    range: float
    midspread: float
    std_dev: float


def extract_features(backbone: LayerStack, ds: ImageDataset, provenance: str = "") -> FeatureDataset:
    """Backbone forward over a dataset, projector discarded, no augmentation."""
    chunks = []
    for start in range(0, len(ds), 256):
        chunks.append(backbone.forward(ds.images[start : start + 256]))
    features = np.concatenate(chunks) if chunks else np.zeros((0, 0))
    return FeatureDataset(features=features, labels=ds.labels.copy(), provenance=provenance)


def acc_at_1(predictions: Tensor, labels) -> float:
    """Fraction of rows whose argmax matches the label, ties to lowest index."""
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if predictions.shape[0] != labels.shape[0]:
        raise ValueError(
            f"got {predictions.shape[0]} prediction rows for {labels.shape[0]} labels"
        )
    return float(np.mean(np.argmax(predictions, axis=1) == labels))


def train_probe(
    fd: FeatureDataset,
    spec: SplitSpec,
    *,
    epochs: int = 50,
    learning_rate: float = 1e-3,
    batch_size: int = 32,
) -> ProbeResult:
    """Logistic-regression probe on frozen features.

    The feature dataset is re-split 70/10/20 by `spec`; a single dense
    layer is trained with Adam (no weight decay) and softmax
    cross-entropy. Acc@1 is the best test-split accuracy over the probe
    epochs.
    """
    classes = np.unique(fd.labels)
    if len(classes) < 2:
        raise ValueError("probe training needs at least 2 classes")
    num_classes = int(fd.labels.max()) + 1
    idx_train, _, idx_test = split_indices(len(fd), spec)

    x_train, y_train = fd.features[idx_train], fd.labels[idx_train]
    x_test, y_test = fd.features[idx_test], fd.labels[idx_test]

    rng = Rng(spec.seed).child("probe")
    layer = init_params(DenseLayer(fd.features.shape[1], num_classes), rng.child("init"))
    stack = LayerStack([layer])
    opt = Adam(stack.parameters(), lr=learning_rate)

    result = ProbeResult(
        acc1=0.0, best_epoch=0, epochs=epochs, learning_rate=learning_rate, batch_size=batch_size
    )
    n = len(x_train)
    for epoch in range(1, epochs + 1):
        order = rng.child("epoch", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits = stack.forward(x_train[idx], record=True)
            loss, dlogits = softmax_cross_entropy(logits, y_train[idx])
            stack.zero_grads()
            stack.backward(dlogits)
            opt.step()
            epoch_losses.append(loss)
        result.train_loss.append(float(np.mean(epoch_losses)))
        acc = acc_at_1(stack.forward(x_test), y_test)
        result.test_acc.append(acc)
        if acc > result.acc1:
            result.acc1 = acc
            result.best_epoch = epoch
    return result


def summarize(accs) -> SummaryStats:
    """Six-number dispersion summary with linearly interpolated quartiles."""
    values = np.asarray(list(accs), dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot summarize an empty list")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        # a constant multiset has exactly zero dispersion; computing it
        # through the mean would leave ~1e-16 rounding residue
        return SummaryStats(minimum=lo, maximum=hi, average=lo,
                            range=0.0, midspread=0.0, std_dev=0.0)
    q1, q3 = np.percentile(values, [25.0, 75.0], method="linear")
    # fsum is exactly rounded, which keeps the summary permutation-invariant
    average = math.fsum(values) / values.size
    variance = math.fsum((v - average) ** 2 for v in values.tolist()) / values.size
    return SummaryStats(
        minimum=lo,
        maximum=hi,
        average=average,
        range=hi - lo,
        midspread=float(q3 - q1),
        std_dev=math.sqrt(variance),
    )
