"""Layers with explicit forward/backward rules, freezing, and gradient checking.

The architecture space is small and fixed (dense, conv, elementwise
activations, 2x2 average pooling, flatten), so each layer carries its own
hand-derived backward rule instead of a general autodiff graph. Every rule
is held to the finite-difference obligation in `grad_check`.

Freezing is a layer-level switch: a frozen layer's parameters are skipped
by optimizers and its gradient buffers stay zero, so the values remain
bitwise identical to whatever they were when frozen.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import NumericsError, Rng, ShapeError, Tensor

ACTIVATION_KINDS = ("relu", "silu", "sigmoid", "tanh", "identity")


class Param:
    """A trainable array paired with its gradient buffer and freeze flag."""

    __slots__ = ("value", "grad", "frozen")

    def __init__(self, value: Tensor, frozen: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.frozen = bool(frozen)


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable elementwise logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: Tensor) -> Tensor:
    """Sigmoid-weighted linear unit x * sigmoid(x)."""
    return x * sigmoid(x)


def _act_forward(kind: str, x: Tensor) -> Tensor:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "silu":
        return silu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    return x


def _act_derivative(kind: str, x: Tensor) -> Tensor:
    if kind == "relu":
        # subgradient at 0 chosen as 0
        return (x > 0).astype(np.float64)
    if kind == "silu":
        s = sigmoid(x)
        return s * (1.0 + x * (1.0 - s))
    if kind == "sigmoid":
        s = sigmoid(x)
        return s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    return np.ones_like(x)


class Layer:
    """Base layer: forward/backward with optional input recording."""

    frozen = False

    def parameters(self) -> list[Param]:
        return []

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        raise NotImplementedError

    def backward(self, grad_out: Tensor) -> Tensor:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0


class DenseLayer(Layer):
    """Affine map x @ W.T + b with weight shape (out, in)."""

    def __init__(self, in_features: int, out_features: int, frozen: bool = False):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.weight = Param(np.zeros((out_features, in_features)), frozen)
        self.bias = Param(np.zeros(out_features), frozen)
        self._input: Tensor | None = None

    @property
    def frozen(self) -> bool:
        return self.weight.frozen

    @frozen.setter
    def frozen(self, flag: bool) -> None:
        self.weight.frozen = bool(flag)
        self.bias.frozen = bool(flag)

    def parameters(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense layer expects (n, {self.in_features}), got {x.shape}"
            )
        self._input = x if record else None
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._input is None:
            raise RuntimeError("backward called without a recorded forward")
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if not self.frozen:
            self.weight.grad += grad_out.T @ self._input
            self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value


class Activation(Layer):
    """Elementwise activation with the exact analytic derivative."""

    def __init__(self, kind: str):
        if kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {kind!r}, expected one of {ACTIVATION_KINDS}")
        self.kind = kind
        self._input: Tensor | None = None

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        self._input = x if record else None
        return _act_forward(self.kind, x)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._input is None:
            raise RuntimeError("backward called without a recorded forward")
        return grad_out * _act_derivative(self.kind, self._input)


class Conv2dLayer(Layer):
    """2-D convolution (via im2col) over (n, c, h, w) inputs.

    Output spatial extents follow floor((n + 2p - k) / s) + 1.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        stride: int = 1,
        padding: int = 0,
        frozen: bool = False,
    ):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = int(padding)
        k = self.kernel_size
        self.kernels = Param(np.zeros((out_channels, in_channels, k, k)), frozen)
        self.bias = Param(np.zeros(out_channels), frozen)
        self._cols: Tensor | None = None
        self._in_shape: tuple[int, ...] | None = None
        self._indices: tuple | None = None

    @property
    def frozen(self) -> bool:
        return self.kernels.frozen

    @frozen.setter
    def frozen(self, flag: bool) -> None:
        self.kernels.frozen = bool(flag)
        self.bias.frozen = bool(flag)

    def parameters(self) -> list[Param]:
        return [self.kernels, self.bias]

    def _out_extent(self, extent: int) -> int:
        return (extent + 2 * self.padding - self.kernel_size) // self.stride + 1

    def _col_indices(self, h: int, w: int):
        key = (h, w)
        if self._indices is not None and self._indices[0] == key:
            return self._indices[1:]
        k, s = self.kernel_size, self.stride
        oh, ow = self._out_extent(h), self._out_extent(w)
        ic = self.in_channels
        i0 = np.tile(np.repeat(np.arange(k), k), ic)
        j0 = np.tile(np.arange(k), k * ic)
        i1 = s * np.repeat(np.arange(oh), ow)
        j1 = s * np.tile(np.arange(ow), oh)
        rows = i0[:, None] + i1[None, :]
        cols = j0[:, None] + j1[None, :]
        chans = np.repeat(np.arange(ic), k * k)[:, None]
        self._indices = (key, chans, rows, cols, oh, ow)
        return self._indices[1:]

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv layer expects (n, {self.in_channels}, h, w), got {x.shape}"
            )
        n, _, h, w = x.shape
        if self._out_extent(h) < 1 or self._out_extent(w) < 1:
            raise ShapeError(f"conv input {h}x{w} too small for kernel {self.kernel_size}")
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        chans, rows, cols, oh, ow = self._col_indices(h, w)
        patches = xp[:, chans, rows, cols]
        wmat = self.kernels.value.reshape(self.out_channels, -1)
        out = np.einsum("ok,nkp->nop", wmat, patches) + self.bias.value[None, :, None]
        if record:
            self._cols = patches
            self._in_shape = x.shape
        else:
            self._cols = None
            self._in_shape = None
        return out.reshape(n, self.out_channels, oh, ow)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._cols is None or self._in_shape is None:
            raise RuntimeError("backward called without a recorded forward")
        n, _, h, w = self._in_shape
        oh, ow = self._out_extent(h), self._out_extent(w)
        g = np.asarray(grad_out, dtype=np.float64).reshape(n, self.out_channels, oh * ow)
        wmat = self.kernels.value.reshape(self.out_channels, -1)
        if not self.frozen:
            self.kernels.grad += np.einsum("nop,nkp->ok", g, self._cols).reshape(
                self.kernels.value.shape
            )
            self.bias.grad += g.sum(axis=(0, 2))
        dcols = np.einsum("ok,nop->nkp", wmat, g)
        p = self.padding
        dxp = np.zeros((n, self.in_channels, h + 2 * p, w + 2 * p))
        chans, rows, cols, _, _ = self._col_indices(h, w)
        np.add.at(dxp, (np.arange(n)[:, None, None], chans, rows, cols), dcols)
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class AvgPool2dLayer(Layer):
    """2x2 average pooling with stride 2; spatial extents must be even."""

    def __init__(self):
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"pool layer expects (n, c, h, w), got {x.shape}")
        n, c, h, w = x.shape
        if h % 2 or w % 2 or h < 2 or w < 2:
            raise ShapeError(f"2x2 pooling needs even spatial extents, got {h}x{w}")
        self._in_shape = x.shape if record else None
        return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._in_shape is None:
            raise RuntimeError("backward called without a recorded forward")
        g = np.asarray(grad_out, dtype=np.float64)
        return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0


class FlattenLayer(Layer):
    """Collapse all but the batch axis."""

    def __init__(self):
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        self._in_shape = x.shape if record else None
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._in_shape is None:
            raise RuntimeError("backward called without a recorded forward")
        return np.asarray(grad_out, dtype=np.float64).reshape(self._in_shape)


class LayerStack:
    """Ordered layer composition shared by backbones, projectors, and codecs."""

    def __init__(self, layers: Sequence[Layer], input_shape: tuple[int, ...] | None = None):
        self.layers = list(layers)
        self._recorded = False
        self._validate(input_shape)

    def _validate(self, input_shape: tuple[int, ...] | None) -> None:
        # statically check dense-to-dense widths; a probe shape checks the rest
        width: int | None = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, DenseLayer):
                if width is not None and width != layer.in_features:
                    raise ShapeError(
                        f"layer {i} expects width {layer.in_features}, got {width}"
                    )
                width = layer.out_features
            elif not isinstance(layer, Activation):
                width = None
        if input_shape is not None:
            probe = np.zeros((1, *input_shape))
            self.forward(probe, record=False)

    def parameters(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def forward(self, x: Tensor, record: bool = False) -> Tensor:
        out = np.asarray(x, dtype=np.float64)
        for i, layer in enumerate(self.layers):
            try:
                out = layer.forward(out, record=record)
            except ShapeError as exc:
                raise ShapeError(f"at layer {i} ({type(layer).__name__}): {exc}") from None
        self._recorded = record
        return out

    def backward(self, grad_out: Tensor) -> Tensor:
        if not self._recorded:
            raise RuntimeError("backward called without a recorded forward")
        grad = np.asarray(grad_out, dtype=np.float64)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        self._recorded = False
        return grad

    def clone(self) -> "LayerStack":
        return copy.deepcopy(self)


def init_params(layer: Layer, rng: Rng) -> Layer:
    """Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases."""
    if isinstance(layer, DenseLayer):
        fan_in, fan_out = layer.in_features, layer.out_features
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        layer.weight.value[...] = rng.uniform(-limit, limit, layer.weight.value.shape)
        layer.bias.value[...] = 0.0
    elif isinstance(layer, Conv2dLayer):
        k = layer.kernel_size
        fan_in = layer.in_channels * k * k
        fan_out = layer.out_channels * k * k
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        layer.kernels.value[...] = rng.uniform(-limit, limit, layer.kernels.value.shape)
        layer.bias.value[...] = 0.0
    return layer


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    params_checked: int


def grad_check(
    stack: LayerStack,
    loss_fn: Callable[[Tensor], tuple[float, Tensor]],
    x: Tensor,
    eps: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic parameter gradients against central differences.

    `loss_fn` maps the stack output to (scalar loss, dloss/doutput). Every
    non-frozen scalar parameter is perturbed by +-eps; the relative error
    denominator is max(|analytic|, |numeric|, 1e-8). Frozen parameters are
    not checked.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)

    out = stack.forward(x, record=True)
    loss, dout = loss_fn(out)
    if not math.isfinite(loss):
        raise NumericsError("non-finite loss in grad_check")
    stack.zero_grads()
    stack.backward(dout)

    max_err = 0.0
    checked = 0
    for p in stack.parameters():
        if p.frozen:
            continue
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            loss_hi, _ = loss_fn(stack.forward(x, record=False))
            flat[idx] = orig - eps
            loss_lo, _ = loss_fn(stack.forward(x, record=False))
            flat[idx] = orig
            if not (math.isfinite(loss_hi) and math.isfinite(loss_lo)):
                raise NumericsError("non-finite loss in grad_check")
            numeric = (loss_hi - loss_lo) / (2.0 * eps)
            analytic = gflat[idx]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            max_err = max(max_err, abs(analytic - numeric) / denom)
            checked += 1
    return GradCheckResult(max_err, checked)
