"""
Shared fixtures: tiny generators saved as GNW files and a problem they can solve exactly

The generators are small enough that a full solver run takes a fraction of a
second. Every handle is loaded back from disk, so the float32 rounding of the
weight file is already applied.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from src.modules.blur.kernels import blur_image
from src.modules.deblur.problem import DeblurProblem, GeneratorHandle, kernel_of
from src.modules.generators import layers as L
from src.modules.generators.layers import build_network
from src.modules.generators.network import init_weights
from src.modules.generators.weight_file import save_weights
from src.modules.numerics.random_streams import SeededRng

IMAGE_LATENT = 4
BLUR_LATENT = 3
IMAGE_SHAPE = (1, 8, 8)


def tiny_image_network():
    return build_network([
        L.fc(64), L.reshape(4, 4, 4), L.upsample(2), L.conv(1, 3, 1, padding=1), L.sigmoid(),
    ], input_dim=IMAGE_LATENT)


def tiny_blur_network():
    return build_network([L.fc(9), L.sigmoid(), L.reshape(1, 3, 3)], input_dim=BLUR_LATENT)


def save_generator(spec, seed: int, path: Path, scheme: str = "uniform_fan_in") -> Path:
    return save_weights(spec, init_weights(spec, scheme, SeededRng(seed)), path)


@dataclass
class Observation:
    y: np.ndarray
    z_i: np.ndarray
    z_k: np.ndarray
    image: np.ndarray
    kernel: np.ndarray


@pytest.fixture
def image_model_path(tmp_path) -> Path:
    return save_generator(tiny_image_network(), 11, tmp_path / "models" / "image.gnw")


@pytest.fixture
def blur_model_path(tmp_path) -> Path:
    return save_generator(tiny_blur_network(), 12, tmp_path / "models" / "blur.gnw")


@pytest.fixture
def image_handle(image_model_path) -> GeneratorHandle:
    return GeneratorHandle.from_file(image_model_path)


@pytest.fixture
def blur_handle(blur_model_path) -> GeneratorHandle:
    return GeneratorHandle.from_file(blur_model_path)


@pytest.fixture
def observation(image_handle, blur_handle) -> Observation:
    """Noise-free y = G_I(z_i) (*) G_K(z_k) for fixed latents"""
    rng = SeededRng(5)
    z_i = rng.standard_normal(IMAGE_LATENT)
    z_k = rng.standard_normal(BLUR_LATENT)
    image = image_handle.sample(z_i)
    kernel = kernel_of(blur_handle.sample(z_k))
    return Observation(y=blur_image(image, kernel), z_i=z_i, z_k=z_k, image=image, kernel=kernel)


@pytest.fixture
def problem(observation, image_handle, blur_handle) -> DeblurProblem:
    return DeblurProblem(observation.y, blur_generator=blur_handle, image_generator=image_handle)
