"""Autoencoder construction, training protocol, and embedding extraction."""

import numpy as np
import pytest

from miniclr.autoencoder import (
    AutoencoderSpec,
    build_autoencoder,
    extract_embedding_layer,
    reconstruct,
    train_autoencoder,
)
from miniclr.losses import mse
from miniclr.nn import DenseLayer
from miniclr.tensor import Rng


def param_count(ae):
    return sum(p.value.size for p in ae.parameters())


class TestBuild:
    def test_parameter_count_from_layer_shapes(self):
        ae = build_autoencoder(AutoencoderSpec(64, 64, 32), Rng(0))
        expected = (64 * 64 + 64) + (64 * 32 + 32) + (32 * 64 + 64) + (64 * 64 + 64)
        assert param_count(ae) == expected

    def test_widths(self):
        ae = build_autoencoder(AutoencoderSpec(100, 64, 16), Rng(0))
        assert ae.encoder.forward(np.zeros((1, 100))).shape == (1, 16)
        assert ae.decoder.forward(np.zeros((1, 16))).shape == (1, 100)

    @pytest.mark.parametrize("latent", [128, 256, 512])
    def test_decoder_mirrors_encoder(self, latent):
        ae = build_autoencoder(AutoencoderSpec(768, 512, latent), Rng(1))
        enc = [l for l in ae.encoder.layers if isinstance(l, DenseLayer)]
        dec = [l for l in ae.decoder.layers if isinstance(l, DenseLayer)]
        enc_widths = [(l.in_features, l.out_features) for l in enc]
        dec_widths = [(l.out_features, l.in_features) for l in reversed(dec)]
        assert enc_widths == dec_widths

    def test_same_seed_identical_init(self):
        a = build_autoencoder(AutoencoderSpec(20, 8, 4), Rng(3))
        b = build_autoencoder(AutoencoderSpec(20, 8, 4), Rng(3))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.value, pb.value)

    def test_rejects_expanding_latent(self):
        with pytest.raises(ValueError):
            AutoencoderSpec(16, 16, 32)


class TestReconstruct:
    def test_zero_decoder_gives_zero_output(self):
        ae = build_autoencoder(AutoencoderSpec(10, 6, 3), Rng(0))
        for layer in ae.decoder.layers:
            if isinstance(layer, DenseLayer):
                layer.weight.value[...] = 0.0
                layer.bias.value[...] = 0.0
        out = reconstruct(ae, np.ones(10))
        assert np.all(out == 0.0)

    def test_reconstruction_error_finite_nonnegative(self):
        ae = build_autoencoder(AutoencoderSpec(10, 6, 3), Rng(1))
        x = np.asarray(Rng(2).uniform(0, 1, 10))
        d = mse(x, reconstruct(ae, x))
        assert np.isfinite(d) and d >= 0.0


class TestTraining:
    def test_overfits_single_repeated_vector(self):
        """One repeated sample is memorized to val MSE < 1e-4 (lr raised)."""
        x = np.asarray(Rng(0).uniform(0.0, 1.0, 12))
        data = np.tile(x, (8, 1))
        ae = build_autoencoder(AutoencoderSpec(12, 8, 4), Rng(1))
        best, report = train_autoencoder(
            ae, data, data[:2], epochs=100, batch_size=8, lr=1e-2, rng=Rng(2)
        )
        assert report.best_val < 1e-4
        assert np.max(np.abs(x - reconstruct(best, x))) < 0.05

    def test_best_checkpoint_val_equals_curve_minimum(self):
        rng = Rng(3)
        data = np.asarray(rng.uniform(0.0, 1.0, (40, 10)))
        ae = build_autoencoder(AutoencoderSpec(10, 8, 4), rng.child("ae"))
        best, report = train_autoencoder(
            ae, data[:32], data[32:], epochs=15, batch_size=8, lr=1e-2, rng=rng.child("t")
        )
        recomputed = mse(data[32:], reconstruct(best, data[32:]))
        assert recomputed == min(report.val_mse)
        assert report.best_val == min(report.val_mse)
        assert report.val_mse[report.best_epoch - 1] == report.best_val

    def test_training_report_deterministic(self):
        def run():
            data = np.asarray(Rng(5).uniform(0.0, 1.0, (30, 8)))
            ae = build_autoencoder(AutoencoderSpec(8, 6, 3), Rng(6))
            _, report = train_autoencoder(
                ae, data[:24], data[24:], epochs=5, batch_size=8, lr=1e-3, rng=Rng(7)
            )
            return report

        a, b = run(), run()
        assert a.train_mse == b.train_mse
        assert a.val_mse == b.val_mse
        assert a.best_epoch == b.best_epoch

    def test_rejects_wrong_width(self):
        ae = build_autoencoder(AutoencoderSpec(8, 6, 3), Rng(0))
        with pytest.raises(ValueError):
            train_autoencoder(ae, np.zeros((4, 9)), np.zeros((2, 9)), epochs=1, rng=Rng(1))


class TestEmbeddingExtraction:
    def test_shape_and_frozen_flag(self):
        ae = build_autoencoder(AutoencoderSpec(50, 30, 12), Rng(0))
        layer = extract_embedding_layer(ae)
        assert layer.weight.value.shape == (12, 30)
        assert layer.frozen

    def test_copy_is_independent(self):
        ae = build_autoencoder(AutoencoderSpec(20, 10, 5), Rng(1))
        layer = extract_embedding_layer(ae)
        before = ae.encoder.layers[-1].weight.value.copy()
        layer.weight.value[...] = 99.0
        assert np.array_equal(ae.encoder.layers[-1].weight.value, before)

    def test_matches_encoder_intermediate_activation(self):
        """Forward through the copy equals the encoder's final-layer output."""
        ae = build_autoencoder(AutoencoderSpec(20, 10, 5), Rng(2))
        layer = extract_embedding_layer(ae)
        v = np.asarray(Rng(3).uniform(-1.0, 1.0, (4, 20)))
        hidden = ae.encoder.layers[1].forward(ae.encoder.layers[0].forward(v))
        assert np.array_equal(layer.forward(hidden), ae.encoder.forward(v))
