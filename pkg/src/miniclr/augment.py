"""The contrastive transformation space and view-pair sampling.

Per view the pipeline is crop -> flip -> color jitter -> grayscale -> blur;
Z-scoring, when enabled, happens after augmentation so the jitter math can
assume [0, 1] pixels. Every transform maps [0, 1] images to [0, 1] images
and is a pure function of its rng argument, so a pair is reproducible from
the (seed, stream) that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Rng, Tensor


@dataclass(frozen=True)
class TransformSpace:
    """Parameter ranges of the augmentation family.

    Defaults follow the widely used contrastive-pretraining recipe: crop
    scale (0.08, 1.0), aspect (3/4, 4/3), flip 0.5, jitter 0.8 with
    strengths (0.8, 0.8, 0.8, 0.2) scaled by 0.5, grayscale 0.2, blur 0.5
    with sigma in [0.1, 2.0] and kernel size tied to image resolution.
    """

    crop_scale_range: tuple[float, float] = (0.08, 1.0)
    crop_aspect_range: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    flip_prob: float = 0.5
    jitter_prob: float = 0.8
    jitter_strengths: tuple[float, float, float, float] = (0.4, 0.4, 0.4, 0.1)
    grayscale_prob: float = 0.2
    blur_prob: float = 0.5
    blur_sigma_range: tuple[float, float] = (0.1, 2.0)

    def __post_init__(self):
        for name in ("flip_prob", "jitter_prob", "grayscale_prob", "blur_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        for name in ("crop_scale_range", "crop_aspect_range", "blur_sigma_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name}=({lo}, {hi}) is not a valid range")


@dataclass(frozen=True)
class AugmentedPair:
    """Two stochastic views of one source image."""

    view_i: Tensor
    view_j: Tensor
    source: int = -1


def _bilinear_resize(img: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize (c, h, w) with half-pixel-center bilinear sampling."""
    c, h, w = img.shape
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[None, :, None]
    wx = (sx - x0)[None, None, :]
    top = img[:, y0[:, None], x0[None, :]] * (1.0 - wx) + img[:, y0[:, None], x1[None, :]] * wx
    bot = img[:, y1[:, None], x0[None, :]] * (1.0 - wx) + img[:, y1[:, None], x1[None, :]] * wx
    return top * (1.0 - wy) + bot * wy


def random_resized_crop(
    x: Tensor,
    scale_range: tuple[float, float],
    aspect_range: tuple[float, float],
    out_h: int,
    out_w: int,
    rng: Rng,
) -> Tensor:
    """Crop a random area/aspect sub-rectangle and resize it bilinearly.

    Falls back to a center crop (aspect clamped to the range) when ten
    proposals in a row fail to fit.
    """
    c, h, w = x.shape
    area = h * w
    log_lo, log_hi = math.log(aspect_range[0]), math.log(aspect_range[1])
    for _ in range(10):
        target_area = area * rng.uniform(scale_range[0], scale_range[1])
        ratio = math.exp(rng.uniform(log_lo, log_hi))
        w_c = int(round(math.sqrt(target_area * ratio)))
        h_c = int(round(math.sqrt(target_area / ratio)))
        if 0 < w_c <= w and 0 < h_c <= h:
            top = int(rng.integers(0, h - h_c + 1))
            left = int(rng.integers(0, w - w_c + 1))
            return _bilinear_resize(x[:, top : top + h_c, left : left + w_c], out_h, out_w)
    in_ratio = w / h
    if in_ratio < aspect_range[0]:
        w_c, h_c = w, min(h, int(round(w / aspect_range[0])))
    elif in_ratio > aspect_range[1]:
        w_c, h_c = min(w, int(round(h * aspect_range[1]))), h
    else:
        w_c, h_c = w, h
    top = (h - h_c) // 2
    left = (w - w_c) // 2
    return _bilinear_resize(x[:, top : top + h_c, left : left + w_c], out_h, out_w)


def horizontal_flip(x: Tensor) -> Tensor:
    """Reverse the width axis."""
    return x[:, :, ::-1].copy()


def to_grayscale(x: Tensor) -> Tensor:
    """Replicate luminance 0.299 R + 0.587 G + 0.114 B to three channels."""
    if x.shape[0] != 3:
        raise ValueError(f"grayscale expects 3 channels, got {x.shape[0]}")
    y = 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2]
    return np.stack([y, y, y])


def adjust_brightness(x: Tensor, factor: float) -> Tensor:
    return np.clip(x * factor, 0.0, 1.0)


def adjust_contrast(x: Tensor, factor: float) -> Tensor:
    anchor = to_grayscale(x)[0].mean()
    return np.clip(factor * x + (1.0 - factor) * anchor, 0.0, 1.0)


def adjust_saturation(x: Tensor, factor: float) -> Tensor:
    return np.clip(factor * x + (1.0 - factor) * to_grayscale(x), 0.0, 1.0)


def _rgb_to_hsv(x: Tensor) -> Tensor:
    r, g, b = x[0], x[1], x[2]
    maxc = x.max(axis=0)
    minc = x.min(axis=0)
    delta = maxc - minc
    safe = np.where(delta == 0.0, 1.0, delta)
    h = np.zeros_like(maxc)
    h = np.where(maxc == r, ((g - b) / safe) % 6.0, h)
    h = np.where((maxc == g) & (maxc != r), (b - r) / safe + 2.0, h)
    h = np.where((maxc == b) & (maxc != r) & (maxc != g), (r - g) / safe + 4.0, h)
    h = np.where(delta == 0.0, 0.0, h / 6.0)
    s = np.where(maxc == 0.0, 0.0, delta / np.where(maxc == 0.0, 1.0, maxc))
    return np.stack([h, s, maxc])


def _hsv_to_rgb(hsv: Tensor) -> Tensor:
    h, s, v = hsv[0], hsv[1], hsv[2]
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def adjust_hue(x: Tensor, shift: float) -> Tensor:
    """Rotate hue by `shift` turns (in [-0.5, 0.5])."""
    if shift == 0.0:
        return x
    hsv = _rgb_to_hsv(x)
    hsv[0] = (hsv[0] + shift) % 1.0
    return np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)


def color_jitter(
    x: Tensor, strengths: tuple[float, float, float, float], rng: Rng
) -> Tensor:
    """Brightness/contrast/saturation scaling and hue rotation, random order.

    Factors are drawn uniformly from [max(0, 1 - s), 1 + s] (hue shift from
    [-s, s]); sub-transforms whose draw lands exactly on the identity are
    skipped so zero strengths leave the image untouched.
    """
    order = rng.permutation(4)
    out = x
    for op in order:
        s = strengths[op]
        if op == 3:
            shift = rng.uniform(-s, s)
            if shift != 0.0:
                out = adjust_hue(out, shift)
            continue
        factor = rng.uniform(max(0.0, 1.0 - s), 1.0 + s)
        if factor == 1.0:
            continue
        if op == 0:
            out = adjust_brightness(out, factor)
        elif op == 1:
            out = adjust_contrast(out, factor)
        else:
            out = adjust_saturation(out, factor)
    return out


def blur_kernel_size(h: int, w: int) -> int:
    """Largest odd integer at most round(0.1 * min(h, w)), floored at 3."""
    base = int(round(0.1 * min(h, w)))
    if base % 2 == 0:
        base -= 1
    return max(base, 3)


def _convolve_axis(img: Tensor, kernel: Tensor, axis: int) -> Tensor:
    half = len(kernel) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (half, half)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    for tap, weight in enumerate(kernel):
        sl = [slice(None)] * img.ndim
        sl[axis] = slice(tap, tap + img.shape[axis])
        out += weight * padded[tuple(sl)]
    return out


def gaussian_blur(x: Tensor, sigma_range: tuple[float, float], rng: Rng) -> Tensor:
    """Separable Gaussian blur with resolution-adaptive kernel size.

    Edge-replication padding; kernel weights normalized to sum 1, so
    constant images pass through unchanged.
    """
    c, h, w = x.shape
    if h < 3 or w < 3:
        raise ValueError(f"blur needs at least 3x3 images, got {h}x{w}")
    k = blur_kernel_size(h, w)
    sigma = rng.uniform(sigma_range[0], sigma_range[1])
    offsets = np.arange(k) - (k - 1) / 2.0
    kernel = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel /= kernel.sum()
    return _convolve_axis(_convolve_axis(x, kernel, axis=1), kernel, axis=2)


def _one_view(x: Tensor, space: TransformSpace, rng: Rng) -> Tensor:
    c, h, w = x.shape
    out = random_resized_crop(x, space.crop_scale_range, space.crop_aspect_range, h, w, rng)
    if rng.uniform(0.0, 1.0) < space.flip_prob:
        out = horizontal_flip(out)
    if rng.uniform(0.0, 1.0) < space.jitter_prob:
        out = color_jitter(out, space.jitter_strengths, rng)
    if rng.uniform(0.0, 1.0) < space.grayscale_prob:
        out = to_grayscale(out)
    if rng.uniform(0.0, 1.0) < space.blur_prob:
        out = gaussian_blur(out, space.blur_sigma_range, rng)
    return out


def sample_pair(x: Tensor, space: TransformSpace, rng: Rng, source: int = -1) -> AugmentedPair:
    """Two independent transformation draws applied to the same image."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] < 8 or x.shape[2] < 8:
        raise ValueError(f"expected a (c, h, w) image at least 8x8, got {x.shape}")
    return AugmentedPair(
        view_i=_one_view(x, space, rng.child("view", 0)),
        view_j=_one_view(x, space, rng.child("view", 1)),
        source=source,
    )
