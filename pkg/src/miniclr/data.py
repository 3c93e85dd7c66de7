"""Dataset ingestion, deterministic splitting, Z-score normalization, and a
synthetic generator so the whole pipeline runs with zero downloads.

Images live in (n, c, h, w) float64 arrays with values in [0, 1] until
normalization. Splits are 70/10/20 by a seeded permutation; normalization
statistics always come from the train split alone and use the population
standard deviation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .tensor import Rng, Tensor


@dataclass
class ImageDataset:
    """Labelled image collection with pixel values in [0, 1] until normalized."""

    images: Tensor
    labels: np.ndarray
    name: str
    num_classes: int
    normalized: bool = False

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, c, h, w), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels length must match image count")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not self.normalized and len(self.labels):
            lo, hi = self.images.min(), self.images.max()
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"pixel values outside [0, 1]: [{lo}, {hi}]")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> int:
        return self.images.shape[2]

    @property
    def channels(self) -> int:
        return self.images.shape[1]

    def subset(self, indices: np.ndarray) -> "ImageDataset":
        return replace(self, images=self.images[indices].copy(), labels=self.labels[indices].copy())


@dataclass(frozen=True)
class SplitSpec:
    """Split fractions plus the shuffle seed that fixes the permutation."""

    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {self.fractions}")
        if any(f <= 0 for f in self.fractions):
            raise ValueError("all split fractions must be positive")


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    """Split counts: floor of the first two fractions, remainder to test."""
    n_train = int(math.floor(spec.fractions[0] * n + 1e-9))
    n_val = int(math.floor(spec.fractions[1] * n + 1e-9))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"n={n} too small to give each split at least one element")
    return n_train, n_val, n_test


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint, covering index arrays for train/val/test."""
    n_train, n_val, _ = split_sizes(n, spec)
    perm = Rng(spec.seed).child("split").permutation(n)
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def split(ds: ImageDataset, spec: SplitSpec) -> tuple[ImageDataset, ImageDataset, ImageDataset]:
    """Deterministic 70/10/20 partition of a dataset."""
    idx_train, idx_val, idx_test = split_indices(len(ds), spec)
    return ds.subset(idx_train), ds.subset(idx_val), ds.subset(idx_test)


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean and population standard deviation of a train split."""

    mean: Tensor
    std: Tensor


def compute_norm_stats(train: ImageDataset) -> NormStats:
    """Channel-wise mean/std over every pixel of the train split."""
    if len(train) == 0:
        raise ValueError("cannot compute normalization statistics of an empty split")
    mean = train.images.mean(axis=(0, 2, 3))
    std = train.images.std(axis=(0, 2, 3))
    if np.any(std == 0.0):
        raise ValueError("zero variance in at least one channel")
    return NormStats(mean=mean, std=std)


def normalize_images(images: Tensor, stats: NormStats) -> Tensor:
    """Apply (x - mean) / std per channel to an (..., c, h, w) array."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[-3] != stats.mean.shape[0]:
        raise ValueError(
            f"channel mismatch: images have {images.shape[-3]}, stats have {stats.mean.shape[0]}"
        )
    shape = (len(stats.mean), 1, 1)
    return (images - stats.mean.reshape(shape)) / stats.std.reshape(shape)


def apply_zscore(ds: ImageDataset, stats: NormStats) -> ImageDataset:
    """Standardize a dataset with the given statistics; labels untouched."""
    return replace(ds, images=normalize_images(ds.images, stats), normalized=True)


def _class_color(class_id: int, num_classes: int) -> np.ndarray:
    """Distinct saturated RGB per class from an even hue-wheel spacing."""
    hue = class_id / num_classes
    phases = hue - np.array([0.0, 1.0 / 3.0, 2.0 / 3.0])
    return 0.55 + 0.45 * np.cos(2.0 * math.pi * phases)


def synth_blobs(num_classes: int, per_class: int, resolution: int, rng: Rng) -> ImageDataset:
    """Procedural class-colored textures with a jittered bright blob.

    Class identity sets the base hue and the stripe frequency, so raw
    pixels are linearly separable while crops, grayscaling, and jitter
    still change individual views substantially.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    n = num_classes * per_class
    images = np.zeros((n, 3, resolution, resolution))
    labels = np.arange(n) % num_classes
    yy, xx = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    for idx in range(n):
        k = int(labels[idx])
        r = rng.child("img", idx)
        color = _class_color(k, num_classes)
        theta = r.uniform(0.0, math.pi)
        phase = r.uniform(0.0, 2.0 * math.pi)
        freq = 1.5 + k
        wave = (xx * math.cos(theta) + yy * math.sin(theta)) / resolution
        field_v = 0.45 + 0.25 * np.sin(2.0 * math.pi * freq * wave + phase)
        img = color[:, None, None] * field_v[None, :, :]
        cy = r.uniform(0.3, 0.7) * resolution
        cx = r.uniform(0.3, 0.7) * resolution
        radius = r.uniform(0.16, 0.26) * resolution
        mask = ((yy - cy) ** 2 + (xx - cx) ** 2) < radius**2
        bright = np.clip(color * 1.1 + 0.25, 0.0, 1.0)
        img = np.where(mask[None, :, :], bright[:, None, None] * np.ones_like(img), img)
        img += r.uniform(-0.04, 0.04, img.shape)
        images[idx] = np.clip(img, 0.0, 1.0)
    return ImageDataset(images=images, labels=labels, name="blobs", num_classes=num_classes)


_CIFAR_RECORD = 3073
_CIFAR_CLASSES = 10


def load_cifar_binary(path: str | os.PathLike) -> ImageDataset:
    """Parse the standard 3073-byte-record binary layout.

    Each record is one label byte followed by 3072 pixel bytes stored
    channel-planar (R, G, B), row-major 32x32; pixels scale to [0, 1].
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % _CIFAR_RECORD:
        raise ValueError(f"truncated file: {len(raw)} bytes is not a multiple of {_CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.max(initial=0) >= _CIFAR_CLASSES:
        raise ValueError(f"label byte {labels.max()} out of range [0, {_CIFAR_CLASSES})")
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return ImageDataset(images=images, labels=labels, name="cifar10", num_classes=_CIFAR_CLASSES)


def load_packed(path: str | os.PathLike) -> ImageDataset:
    """Load a dataset stored in the tensor container ("images", "labels")."""
    from .container import load_container

    tensors, meta = load_container(path)
    if "images" not in tensors or "labels" not in tensors:
        raise ValueError('packed dataset needs "images" and "labels" entries')
    images = np.asarray(tensors["images"], dtype=np.float64)
    labels = np.asarray(tensors["labels"], dtype=np.int64)
    name = str(meta.get("name", "packed"))
    num_classes = int(meta.get("num_classes", labels.max(initial=0) + 1))
    normalized = bool(meta.get("normalized", False))
    return ImageDataset(
        images=images, labels=labels, name=name, num_classes=num_classes, normalized=normalized
    )


def save_packed(path: str | os.PathLike, ds: ImageDataset) -> None:
    """Write a dataset to the tensor container format."""
    from .container import save_container

    save_container(
        path,
        {"images": ds.images, "labels": ds.labels},
        metadata={"name": ds.name, "num_classes": ds.num_classes, "normalized": ds.normalized},
    )
