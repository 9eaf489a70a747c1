"""
VAE training loop and the procedural image corpus
"""

import csv

import numpy as np
import pytest

from src.modules.generators.weight_file import load_weights
from src.modules.numerics.random_streams import SeededRng
from src.modules.training import vae_training_service
from src.modules.training.shapes_corpus import (
    draw_shapes,
    gen_image_dataset,
    load_image_dataset,
    shapes_corpus,
)
from src.modules.training.vae_training_service import TRACE_COLUMNS, TrainingConfig, train_vae
from src.shared.errors import ArgumentError, ConfigError, DimensionError, NumericError, TrainingDivergedError
from tests.test_vae import tiny_vae


@pytest.fixture
def corpus():
    return shapes_corpus(6, 4, 1, SeededRng(0))


class TestShapesCorpus:

    def test_images_are_in_unit_range(self):
        image = draw_shapes(16, 3, SeededRng(1))
        assert image.shape == (3, 16, 16)
        assert 0.0 <= image.min() and image.max() <= 1.0

    def test_seeded(self):
        assert np.array_equal(draw_shapes(8, 1, SeededRng(2)), draw_shapes(8, 1, SeededRng(2)))

    def test_bad_channel_count(self):
        with pytest.raises(ArgumentError):
            draw_shapes(8, 2, SeededRng(0))

    @pytest.mark.parametrize("fmt", ["f32", "png"])
    def test_dataset_round_trip(self, tmp_path, fmt):
        manifest = gen_image_dataset(4, 8, 1, 3, tmp_path / "images", fmt=fmt, jobs=2)
        images = load_image_dataset(tmp_path / "images")
        assert manifest["count"] == 4
        assert images.shape == (4, 1, 8, 8)
        expected = shapes_corpus(4, 8, 1, SeededRng(3))
        assert np.allclose(images, expected, atol=1.0 / 255 if fmt == "png" else 1e-7)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ConfigError):
            load_image_dataset(tmp_path / "absent")


class TestVaeTraining:

    def test_training_is_deterministic(self, corpus):
        config = TrainingConfig(epochs=2, batch_size=4, lr=1e-2, seed=5)
        first = train_vae(tiny_vae(), corpus, config)
        second = train_vae(tiny_vae(), corpus, config)
        assert first.trace == second.trace
        assert first.weights.decoder.allclose(second.weights.decoder, rtol=0, atol=0)

    def test_trace_rows(self, corpus):
        outcome = train_vae(tiny_vae(), corpus, TrainingConfig(epochs=3, batch_size=4, seed=1))
        assert [row[0] for row in outcome.trace] == [1, 2, 3]
        for _, recon, kl, total in outcome.trace:
            assert kl >= 0
            assert total == pytest.approx(recon + kl)

    def test_loss_decreases(self, corpus):
        outcome = train_vae(tiny_vae(), corpus, TrainingConfig(epochs=40, batch_size=6, lr=2e-2, seed=2))
        assert outcome.trace[-1][3] < outcome.trace[0][3]

    def test_export(self, corpus, tmp_path):
        outcome = train_vae(tiny_vae(), corpus, TrainingConfig(epochs=1, batch_size=3), tmp_path / "vae")
        for part in ("encoder", "mu_head", "logvar_head", "decoder"):
            assert (tmp_path / "vae" / f"{part}.gnw").exists()
        spec, weights = load_weights(outcome.decoder_path)
        assert spec.input_dim == 2
        assert not weights.training
        with open(tmp_path / "vae" / "trace.csv") as handle:
            rows = list(csv.reader(handle))
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert len(rows) == 2

    def test_dataset_shape_checked(self):
        with pytest.raises(DimensionError):
            train_vae(tiny_vae(), np.zeros((2, 1, 5, 5)), TrainingConfig(epochs=1))

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            TrainingConfig.from_options(epochs=0)

    def test_divergence_keeps_trace(self, corpus, monkeypatch):
        real_pass = vae_training_service.elbo_pass
        calls = []

        def failing_pass(*args, **kwargs):
            calls.append(1)
            if len(calls) > 2:
                raise NumericError("loss is nan")
            return real_pass(*args, **kwargs)

        monkeypatch.setattr(vae_training_service, "elbo_pass", failing_pass)
        with pytest.raises(TrainingDivergedError) as info:
            train_vae(tiny_vae(), corpus, TrainingConfig(epochs=3, batch_size=3))
        assert info.value.iteration == 2
        assert [row[0] for row in info.value.trace] == [1]
