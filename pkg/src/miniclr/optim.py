"""Optimizers and learning-rate schedules used by the training loops.

SGD couples weight decay into the gradient (classic L2) and Adam applies
bias-corrected moments on every step. Frozen parameters are skipped
entirely, which keeps their values bitwise untouched. Schedulers step once
per epoch.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .nn import Param


class SgdMomentum:
    """SGD with momentum: v <- m*v + (g + wd*p); p <- p - lr*v."""

    def __init__(
        self,
        params: Sequence[Param],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.frozen:
                continue
            grad = p.grad
            if self.weight_decay:
                grad = grad + self.weight_decay * p.value
            v *= self.momentum
            v += grad
            p.value -= self.lr * v


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(
        self,
        params: Sequence[Param],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.frozen:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class CosineAnnealing:
    """Closed-form cosine decay from eta0 to eta_min over t_max epochs."""

    def __init__(self, eta0: float, eta_min: float, t_max: int):
        if t_max < 1:
            raise ValueError("t_max must be at least 1")
        self.eta0 = float(eta0)
        self.eta_min = float(eta_min)
        self.t_max = int(t_max)


def cosine_lr(sched: CosineAnnealing, t: int) -> float:
    """lr(t) = eta_min + (eta0 - eta_min) * (1 + cos(pi*t/t_max)) / 2."""
    if not 0 <= t <= sched.t_max:
        raise ValueError(f"epoch {t} outside [0, {sched.t_max}]")
    return sched.eta_min + (sched.eta0 - sched.eta_min) * (1.0 + math.cos(math.pi * t / sched.t_max)) / 2.0


class ReduceOnPlateau:
    """Halve-on-stall scheduler keyed to a monitored validation loss.

    An improvement is a value strictly smaller than the best seen. The lr is
    multiplied by `factor` when the bad-epoch count exceeds `patience`, after
    which the count resets. The lr never increases and has no lower floor.
    """

    def __init__(self, patience: int = 10, factor: float = 0.5):
        if patience < 0:
            raise ValueError("patience must be non-negative")
        if not 0.0 < factor <= 1.0:
            raise ValueError("factor must be in (0, 1]")
        self.patience = int(patience)
        self.factor = float(factor)
        self.best_so_far = math.inf
        self.bad_epochs = 0


def plateau_update(sched: ReduceOnPlateau, val_loss: float, lr: float) -> float:
    """Advance the plateau state machine one epoch; return the new lr."""
    if not math.isfinite(val_loss):
        raise ValueError(f"non-finite validation loss {val_loss}")
    if val_loss < sched.best_so_far:
        sched.best_so_far = val_loss
        sched.bad_epochs = 0
        return lr
    sched.bad_epochs += 1
    if sched.bad_epochs > sched.patience:
        sched.bad_epochs = 0
        return lr * sched.factor
    return lr


def initial_lr_from_batch(batch_size: int) -> float:
    """Contrastive-stage base learning rate: 0.3 * batch_size / 256."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    return 0.3 * batch_size / 256.0
