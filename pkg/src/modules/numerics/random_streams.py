"""
Seeded random streams and measurement noise

SeededRng wraps numpy's PCG64 generator keyed by a (seed, stream path)
pair. Child streams are derived from the path, not from draws, so restarts,
kernels and sweep problems get the same numbers whether they run serially
or in parallel.
"""

from typing import Tuple

import numpy as np

from src.shared.errors import ArgumentError

RNG_ALGORITHM = "PCG64"


class SeededRng:
    """Single-owner random stream; derive children for parallel work"""

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, stream: Tuple[int, ...] = ()):
        if seed < 0:
            raise ArgumentError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def child(self, index: int) -> "SeededRng":
        """Independent stream for sub-task `index`"""
        return SeededRng(self.seed, self.stream + (int(index),))

    def child_seed(self, index: int) -> int:
        """Plain integer seed for sub-task `index`, for configs that store a seed"""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream + (int(index),))
        return int(sequence.generate_state(1, dtype=np.uint32)[0])

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._generator.normal(loc, scale, size)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def add_gaussian_noise(image: np.ndarray, sigma: float, rng: SeededRng) -> np.ndarray:
    """
    Additive white Gaussian noise; the result is not clipped

    Args:
        image: array of any shape
        sigma: noise standard deviation (0.01 is 1% noise on [0, 1] images)
        rng: random stream consumed for the draw
    """
    if sigma < 0:
        raise ArgumentError(f"Noise sigma must be non-negative, got {sigma}")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return image.copy()
    return image + rng.normal(0.0, sigma, size=image.shape)
