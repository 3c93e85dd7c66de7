"""Backbone and projector construction plus the contrastive training loop."""

import math

import numpy as np
import pytest

from miniclr.augment import TransformSpace
from miniclr.autoencoder import AutoencoderSpec, build_autoencoder, extract_embedding_layer
from miniclr.data import ImageDataset
from miniclr.nn import DenseLayer, LayerStack, grad_check
from miniclr.simclr import (
    BackboneSpec,
    ProjectorSpec,
    SimclrConfig,
    build_backbone,
    build_projector,
    train_simclr,
)
from miniclr.tensor import Rng, ShapeError


def tiny_images(n=16, res=16, classes=2, seed=0):
    images = np.asarray(Rng(seed).uniform(0.0, 1.0, (n, 3, res, res)))
    return ImageDataset(images=images, labels=np.arange(n) % classes,
                        name="tiny", num_classes=classes)


def make_embedding(width, dim_g, seed=0):
    ae = build_autoencoder(AutoencoderSpec(3 * 16 * 16, width, dim_g), Rng(seed))
    return extract_embedding_layer(ae)


class TestBackbone:
    @pytest.mark.parametrize("kind", ["tiny_conv", "mlp"])
    def test_probe_forward_width(self, kind):
        stack = build_backbone(BackboneSpec(kind, 64), 16, Rng(0))
        out = stack.forward(np.zeros((2, 3, 16, 16)))
        assert out.shape == (2, 64)
        assert np.all(np.isfinite(out))

    def test_same_seed_identical(self):
        a = build_backbone(BackboneSpec("tiny_conv", 32), 16, Rng(4))
        b = build_backbone(BackboneSpec("tiny_conv", 32), 16, Rng(4))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.value, pb.value)

    def test_grad_check_full_backbone(self):
        stack = build_backbone(BackboneSpec("tiny_conv", 8), 8, Rng(1))
        x = np.asarray(Rng(2).uniform(0.0, 1.0, (2, 3, 8, 8)))

        def loss_fn(y):
            return float((y**2).sum() / 2.0), y

        assert grad_check(stack, loss_fn, x).max_rel_error < 1e-4

    def test_resolution_too_small(self):
        with pytest.raises(ValueError):
            build_backbone(BackboneSpec("tiny_conv", 8), 4, Rng(0))


class TestProjector:
    def test_mlp_shapes_and_parameter_count(self):
        spec = ProjectorSpec("mlp", 512, 256, "relu", 128, frozen=False)
        proj = build_projector(spec, Rng(0))
        dense = [l for l in proj.layers if isinstance(l, DenseLayer)]
        assert dense[0].weight.value.shape == (256, 512)
        assert dense[1].weight.value.shape == (128, 256)
        expected = (512 * 256 + 256) + (256 * 128 + 128)
        assert sum(p.value.size for p in proj.parameters()) == expected

    def test_transplant_is_bitwise(self):
        emb = make_embedding(64, 32)
        spec = ProjectorSpec("ae", 64, 32, "sigmoid", 16, frozen=True)
        proj = build_projector(spec, Rng(1), embedding=emb)
        assert np.array_equal(proj.layers[0].weight.value, emb.weight.value)
        assert np.array_equal(proj.layers[0].bias.value, emb.bias.value)
        assert proj.layers[0].frozen

    def test_unfrozen_transplant_keeps_init(self):
        emb = make_embedding(64, 32)
        emb.frozen = False
        spec = ProjectorSpec("ae", 64, 32, "sigmoid", 16, frozen=False)
        proj = build_projector(spec, Rng(1), embedding=emb)
        assert np.array_equal(proj.layers[0].weight.value, emb.weight.value)
        assert not proj.layers[0].frozen

    def test_parity_between_kinds(self):
        """Both kinds produce identical layer shapes and parameter counts."""
        emb = make_embedding(64, 32)
        ae = build_projector(ProjectorSpec("ae", 64, 32, "tanh", 16), Rng(0), embedding=emb)
        mlp = build_projector(ProjectorSpec("mlp", 64, 32, "tanh", 16, frozen=False), Rng(0))
        shapes = lambda stack: [p.value.shape for p in stack.parameters()]
        assert shapes(ae) == shapes(mlp)

    def test_embedding_shape_mismatch_rejected(self):
        emb = make_embedding(64, 32)
        spec = ProjectorSpec("ae", 64, 16, "relu", 8)
        with pytest.raises(ShapeError):
            build_projector(spec, Rng(0), embedding=emb)

    def test_projection_cap(self):
        with pytest.raises(ValueError):
            ProjectorSpec("mlp", 64, 32, "relu", 256, frozen=False)

    def test_mlp_cannot_be_frozen(self):
        with pytest.raises(ValueError):
            ProjectorSpec("mlp", 64, 32, "relu", 16, frozen=True)


def run_smoke(seed=0, frozen=True, kind="ae", epochs=1, n=64, batch=8):
    ds = tiny_images(n=n)
    rng = Rng(seed)
    backbone = build_backbone(BackboneSpec("tiny_conv", 16), 16, rng.child("b"))
    embedding = None
    if kind == "ae":
        embedding = make_embedding(16, 8, seed=seed)
        embedding.frozen = frozen
    proj = build_projector(
        ProjectorSpec(kind, 16, 8, "sigmoid", 4, frozen=frozen if kind == "ae" else False),
        rng.child("p"),
        embedding=embedding,
    )
    cfg = SimclrConfig(epochs=epochs, batch_size=batch, seed=seed)
    result = train_simclr(backbone, proj, ds, tiny_images(seed=1, n=8), cfg, TransformSpace())
    return result, embedding


class TestTraining:
    def test_step_bookkeeping(self):
        """One epoch over 64 samples at batch 8 logs exactly 8 finite steps."""
        result, _ = run_smoke()
        assert len(result.history.step_losses) == 8
        assert all(math.isfinite(v) for v in result.history.step_losses)

    def test_frozen_embedding_bitwise_after_run(self):
        result, embedding = run_smoke(epochs=2)
        trained = result.projector.layers[0]
        assert np.array_equal(trained.weight.value, embedding.weight.value)
        assert np.array_equal(trained.bias.value, embedding.bias.value)

    def test_lr_trace_matches_closed_form(self):
        result, _ = run_smoke(epochs=3)
        cfg = SimclrConfig(epochs=3, batch_size=8)
        eta0, eta_min = cfg.initial_lr, cfg.eta_min
        for t, lr in enumerate(result.history.lr_trace):
            expected = eta_min + (eta0 - eta_min) * (1 + math.cos(math.pi * t / 3)) / 2
            assert lr == expected

    def test_deterministic_history(self):
        a, _ = run_smoke(seed=3, epochs=2)
        b, _ = run_smoke(seed=3, epochs=2)
        assert a.history.step_losses == b.history.step_losses
        assert a.history.epoch_val_loss == b.history.epoch_val_loss

    def test_composition_factorization_bitwise(self):
        """g(f(x)) equals the chained stack forward, bit for bit."""
        result, _ = run_smoke(epochs=1)
        x = np.asarray(Rng(11).uniform(0.0, 1.0, (3, 3, 16, 16)))
        h = result.backbone.forward(x)
        z = result.projector.forward(h)
        combined = LayerStack(result.backbone.layers + result.projector.layers)
        assert np.array_equal(combined.forward(x), z)

    def test_batch_larger_than_train_rejected(self):
        ds = tiny_images(n=8)
        backbone = build_backbone(BackboneSpec("mlp", 16), 16, Rng(0))
        proj = build_projector(ProjectorSpec("mlp", 16, 8, "relu", 4, frozen=False), Rng(1))
        with pytest.raises(ValueError):
            train_simclr(backbone, proj, ds, ds, SimclrConfig(epochs=1, batch_size=16),
                         TransformSpace())

    def test_config_lr_derivations(self):
        cfg = SimclrConfig(batch_size=1280)
        assert cfg.initial_lr == 1.5
        assert cfg.eta_min == 1.5 / 50
