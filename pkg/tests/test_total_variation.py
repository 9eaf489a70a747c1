"""Smoothed anisotropic total variation and its gradient"""

import numpy as np
import pytest

from src.modules.numerics.total_variation import TV_EPSILON, tv, tv_grad


class TestTotalVariation:

    def test_constant_image_only_pays_smoothing(self):
        image = np.full((1, 4, 5), 0.3)
        differences = 4 * 4 + 3 * 5
        assert tv(image) == pytest.approx(differences * np.sqrt(TV_EPSILON), rel=1e-12)

    def test_boundaries_are_not_circular(self):
        # a ramp has no wrap-around jump from the last column back to the first
        image = np.tile(np.arange(5.0), (3, 1))
        assert tv(image, eps=0.0) == pytest.approx(3 * 4 * 1.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        image = rng.uniform(size=(3, 6, 5))
        direction = rng.standard_normal(image.shape)
        h = 1e-6
        numeric = (tv(image + h * direction) - tv(image - h * direction)) / (2 * h)
        assert np.sum(tv_grad(image) * direction) == pytest.approx(numeric, rel=1e-6)

    def test_gradient_keeps_two_dimensional_shape(self):
        image = np.random.default_rng(1).uniform(size=(4, 4))
        assert tv_grad(image).shape == (4, 4)
