"""Optimizer update rules and learning-rate schedules."""

import numpy as np
import pytest

from miniclr.nn import Param
from miniclr.optim import (
    Adam,
    CosineAnnealing,
    ReduceOnPlateau,
    SgdMomentum,
    cosine_lr,
    initial_lr_from_batch,
    plateau_update,
)


def scalar_param(value: float) -> Param:
    return Param(np.array([float(value)]))


class TestSgdMomentum:
    def test_zero_grad_is_noop(self):
        p = scalar_param(1.0)
        opt = SgdMomentum([p], lr=0.1, momentum=0.9, weight_decay=0.0)
        opt.step()
        assert p.value[0] == 1.0

    def test_two_step_hand_trace(self):
        """param=1, grad=1, lr=0.1, momentum=0.9: 1 -> 0.9 -> 0.71."""
        p = scalar_param(1.0)
        opt = SgdMomentum([p], lr=0.1, momentum=0.9, weight_decay=0.0)
        p.grad[...] = 1.0
        opt.step()
        assert p.value[0] == pytest.approx(0.9, abs=1e-15)
        p.grad[...] = 1.0
        opt.step()
        assert p.value[0] == pytest.approx(0.71, abs=1e-15)

    def test_frozen_param_untouched(self):
        p = scalar_param(2.0)
        p.frozen = True
        opt = SgdMomentum([p], lr=0.1)
        p.grad[...] = 5.0
        opt.step()
        assert p.value[0] == 2.0

    def test_reduces_to_vanilla_gradient_descent(self):
        """momentum=0, weight_decay=0 gives param' == param - lr*grad exactly."""
        rng = np.random.default_rng(0)
        p = Param(rng.normal(size=(4, 3)))
        before = p.value.copy()
        p.grad[...] = rng.normal(size=(4, 3))
        grad = p.grad.copy()
        SgdMomentum([p], lr=0.05, momentum=0.0, weight_decay=0.0).step()
        assert np.array_equal(p.value, before - 0.05 * grad)

    def test_weight_decay_coupled_into_gradient(self):
        p = scalar_param(2.0)
        opt = SgdMomentum([p], lr=0.1, momentum=0.0, weight_decay=0.5)
        opt.step()  # grad 0, decay pulls toward 0: v = 0.5*2 = 1, p = 2 - 0.1
        assert p.value[0] == pytest.approx(1.9, abs=1e-15)


class TestAdam:
    def test_zero_grad_step_is_noop(self):
        p = scalar_param(3.0)
        Adam([p], lr=0.001).step()
        assert p.value[0] == 3.0

    def test_first_step_bias_correction(self):
        """grad=1 at step 1 moves a zero param by almost exactly -lr."""
        p = scalar_param(0.0)
        opt = Adam([p], lr=0.001)
        p.grad[...] = 1.0
        opt.step()
        assert p.value[0] == pytest.approx(-0.001, rel=1e-6)

    def test_bitwise_deterministic_trajectories(self):
        def run():
            p = Param(np.linspace(-1, 1, 6))
            opt = Adam([p], lr=0.01)
            for step in range(20):
                p.grad[...] = np.sin(p.value + step)
                opt.step()
            return p.value.copy()

        assert np.array_equal(run(), run())


class TestQuadraticConvergence:
    """Both optimizers drive L = |theta|^2/2 below 1e-3 norm within 1000 steps."""

    @pytest.mark.parametrize("name", ["sgd", "adam"])
    def test_converges(self, name):
        rng = np.random.default_rng(5)
        theta = rng.normal(size=8)
        theta *= 1.0 / np.linalg.norm(theta)
        p = Param(theta)
        opt = (
            SgdMomentum([p], lr=0.1, momentum=0.9, weight_decay=0.0)
            if name == "sgd"
            else Adam([p], lr=0.1)
        )
        for _ in range(1000):
            p.grad[...] = p.value
            opt.step()
        assert np.linalg.norm(p.value) < 1e-3


class TestCosineAnnealing:
    def test_endpoints_and_midpoint(self):
        sched = CosineAnnealing(eta0=1.5, eta_min=0.03, t_max=150)
        assert cosine_lr(sched, 0) == 1.5
        assert cosine_lr(sched, 150) == pytest.approx(0.03, abs=1e-15)
        assert cosine_lr(sched, 75) == pytest.approx((1.5 + 0.03) / 2.0, abs=1e-15)

    def test_monotonically_non_increasing(self):
        sched = CosineAnnealing(eta0=0.075, eta_min=0.0015, t_max=30)
        trace = [cosine_lr(sched, t) for t in range(31)]
        assert all(a >= b for a, b in zip(trace, trace[1:]))

    def test_out_of_range(self):
        sched = CosineAnnealing(1.0, 0.0, 10)
        with pytest.raises(ValueError):
            cosine_lr(sched, 11)


class TestReduceOnPlateau:
    def test_improving_losses_keep_lr(self):
        sched = ReduceOnPlateau(patience=10, factor=0.5)
        lr = 1e-4
        for loss in np.linspace(1.0, 0.1, 30):
            lr = plateau_update(sched, float(loss), lr)
        assert lr == 1e-4

    def test_patience_ten_state_machine(self):
        """A best at epoch 1 then constant losses: the halving lands on epoch 12."""
        sched = ReduceOnPlateau(patience=10, factor=0.5)
        lr = 1.0
        trace = []
        losses = [0.5] + [1.0] * 12
        for loss in losses:
            lr = plateau_update(sched, loss, lr)
            trace.append(lr)
        assert trace == [1.0] * 11 + [0.5, 0.5]

    def test_two_reductions_quarter_lr(self):
        # first call sets the best; reductions then need patience+1 bad epochs
        sched = ReduceOnPlateau(patience=2, factor=0.5)
        lr = 1.0
        for _ in range(4):
            lr = plateau_update(sched, 1.0, lr)
        assert lr == 0.5
        for _ in range(3):
            lr = plateau_update(sched, 1.0, lr)
        assert lr == 0.25

    def test_never_increases(self):
        rng = np.random.default_rng(0)
        sched = ReduceOnPlateau(patience=3, factor=0.5)
        lr = 0.1
        for loss in rng.uniform(0.0, 2.0, size=100):
            new_lr = plateau_update(sched, float(loss), lr)
            assert new_lr <= lr
            lr = new_lr

    def test_non_finite_loss_rejected(self):
        with pytest.raises(ValueError):
            plateau_update(ReduceOnPlateau(), float("nan"), 0.1)


class TestInitialLr:
    def test_batch_1280_gives_exactly_1_5(self):
        assert initial_lr_from_batch(1280) == 1.5

    def test_batch_256_is_the_rule_identity(self):
        assert initial_lr_from_batch(256) == pytest.approx(0.3, abs=1e-15)

    def test_batch_392(self):
        assert initial_lr_from_batch(392) == pytest.approx(0.459375, abs=1e-15)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            initial_lr_from_batch(0)
