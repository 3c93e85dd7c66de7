"""Objective functions: reconstruction MSE, cosine similarity, the
normalized temperature-scaled contrastive loss, and softmax cross-entropy.

The contrastive batch layout is fixed: rows [0, N) hold the first view of
each sample and rows [N, 2N) the second, so the positive partner of row r
is (r + N) mod 2N. Each anchor's denominator sums over every other row
(only the anchor itself is excluded), and the reported loss is the mean
over all 2N ordered positive pairs. Log-sum-exp terms subtract the row
maximum before exponentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, assert_finite


@dataclass(frozen=True)
class NTXentConfig:
    """Temperature and batch size of the contrastive loss."""

    temperature: float = 0.5
    batch_size: int = 2

    def __post_init__(self):
        if not 0.0 < self.temperature:
            raise ValueError("temperature must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


def mse(x: Tensor, x_prime: Tensor) -> float:
    """Mean squared error (1/m) * sum((x_i - x'_i)^2) over all elements."""
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ShapeError(f"mse operands differ in shape: {x.shape} vs {x_prime.shape}")
    d = x - x_prime
    return float(np.mean(d * d))


def mse_grad(x: Tensor, x_prime: Tensor) -> Tensor:
    """Gradient of mse(x, x_prime) with respect to x_prime."""
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ShapeError(f"mse operands differ in shape: {x.shape} vs {x_prime.shape}")
    return 2.0 * (x_prime - x) / x.size


def cosine_sim(u: Tensor, v: Tensor) -> float:
    """Cosine of the angle between two vectors; errors on zero norm."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ShapeError(f"cosine_sim operands differ in shape: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine_sim is undefined for zero-norm input")
    return float(np.dot(u, v) / (nu * nv))


def nt_xent_anchor_losses(projections: Tensor, temperature: float) -> Tensor:
    """Per-anchor contrastive losses over the paired row layout."""
    z = np.asarray(projections, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] % 2:
        raise ShapeError(f"expected (2N, d) projections, got {z.shape}")
    two_n = z.shape[0]
    n = two_n // 2
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm projection row")
    u = z / norms[:, None]
    sims = u @ u.T
    logits = sims / temperature
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1)
    lse = row_max + np.log(np.exp(logits - row_max[:, None]).sum(axis=1))
    partner = (np.arange(two_n) + n) % two_n
    return lse - logits[np.arange(two_n), partner]


def nt_xent(projections: Tensor, cfg: NTXentConfig) -> tuple[float, Tensor]:
    """Mean contrastive loss over 2N ordered pairs and its gradient.

    With a single sample (N = 1) the denominator holds only the positive
    partner, so the loss is exactly zero.
    """
    z = np.asarray(projections, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"expected (2N, d) projections, got {z.shape}")
    two_n = 2 * cfg.batch_size
    if z.shape[0] != two_n:
        raise ShapeError(f"expected {two_n} projection rows, got {z.shape[0]}")
    n = cfg.batch_size
    tau = cfg.temperature

    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm projection row")
    u = z / norms[:, None]
    sims = u @ u.T
    logits = sims / tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1)
    probs = np.exp(logits - row_max[:, None])
    probs /= probs.sum(axis=1, keepdims=True)

    idx = np.arange(two_n)
    partner = (idx + n) % two_n
    anchor_losses = -np.log(probs[idx, partner])
    loss = float(anchor_losses.mean())

    # dL/dsims: softmax weight minus the positive indicator, per anchor
    g = probs.copy()
    g[idx, partner] -= 1.0
    g /= tau * two_n
    du = (g + g.T) @ u
    # chain through row normalization u = z / |z|
    grad = (du - (du * u).sum(axis=1, keepdims=True) * u) / norms[:, None]
    assert_finite(grad, "nt_xent gradient")
    return loss, grad


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[float, Tensor]:
    """Mean negative log-likelihood and its gradient (softmax - onehot)/n."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"expected (n, k) logits with n labels, got {logits.shape}")
    k = logits.shape[1]
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), labels]))
    soft = np.exp(shifted - lse[:, None])
    soft[np.arange(n), labels] -= 1.0
    return loss, soft / n
