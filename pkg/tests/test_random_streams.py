"""Seeded streams and measurement noise"""

import numpy as np
import pytest

from src.modules.numerics.random_streams import SeededRng, add_gaussian_noise
from src.shared.errors import ArgumentError


class TestSeededRng:

    def test_same_seed_same_draws(self):
        assert np.array_equal(SeededRng(7).standard_normal(5), SeededRng(7).standard_normal(5))

    def test_children_are_independent_of_parent_draws(self):
        parent = SeededRng(7)
        before = parent.child(3).uniform(size=4)
        parent.uniform(size=100)
        assert np.array_equal(parent.child(3).uniform(size=4), before)

    def test_children_differ_from_each_other(self):
        master = SeededRng(7)
        assert not np.array_equal(master.child(0).standard_normal(4), master.child(1).standard_normal(4))

    def test_child_seed_is_stable(self):
        assert SeededRng(3).child(2).child_seed(5) == SeededRng(3).child(2).child_seed(5)
        assert SeededRng(3).child_seed(0) != SeededRng(3).child_seed(1)

    def test_negative_seed_rejected(self):
        with pytest.raises(ArgumentError):
            SeededRng(-1)


class TestGaussianNoise:

    def test_zero_sigma_copies(self):
        image = np.ones((1, 3, 3))
        noisy = add_gaussian_noise(image, 0.0, SeededRng(0))
        assert np.array_equal(noisy, image)
        assert noisy is not image

    def test_noise_level(self):
        image = np.zeros((1, 200, 200))
        noisy = add_gaussian_noise(image, 0.05, SeededRng(1))
        assert noisy.std() == pytest.approx(0.05, rel=0.02)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ArgumentError):
            add_gaussian_noise(np.zeros(3), -0.1, SeededRng(0))
