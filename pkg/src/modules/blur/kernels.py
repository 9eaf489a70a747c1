"""
Blur kernel synthesis

Motion kernels come from a heading random walk: a polyline of total arc
length L ~ Uniform[L_min, L_max] whose heading changes by a wrapped
Gaussian step at every vertex. The polyline is rasterized with bilinear
exposure, centered on its center of mass and normalized to sum 1.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.modules.numerics.fourier import circ_conv2, embed_kernel
from src.modules.numerics.random_streams import SeededRng, add_gaussian_noise
from src.shared.errors import ArgumentError, DimensionError

logger = logging.getLogger(__name__)

KERNEL_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class KernelCanvas:
    """s x s nonnegative kernel summing to one"""

    values: np.ndarray
    clipped: bool = False

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def center_of_mass(self):
        rows, cols = np.indices(self.values.shape)
        total = self.values.sum()
        return float((rows * self.values).sum() / total), float((cols * self.values).sum() / total)

    def check(self) -> None:
        """Raise if the canvas violates its invariants"""
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1] or self.size % 2 == 0:
            raise DimensionError(f"Kernel canvas must be odd and square, got {self.values.shape}")
        if self.values.min() < 0:
            raise ArgumentError("Kernel has negative taps")
        if abs(self.values.sum() - 1.0) > KERNEL_SUM_TOLERANCE:
            raise ArgumentError(f"Kernel sums to {self.values.sum()!r}")
        center = self.size // 2
        row, col = self.center_of_mass()
        if abs(row - center) > 0.5 or abs(col - center) > 0.5:
            raise ArgumentError(f"Kernel center of mass ({row:.2f}, {col:.2f}) is off center")


class TrajectoryParams(BaseModel):
    """Motion-trajectory model; lengths are in pixels, kappa_dir in radians per step"""

    length_min: float = Field(default=3.0, gt=0)
    length_max: float = Field(default=12.0, gt=0)
    steps: int = Field(default=64, ge=1)
    kappa_dir: float = Field(default=0.35, ge=0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_range(self):
        if self.length_min > self.length_max:
            raise ValueError("length_min must not exceed length_max")
        return self

    def check_canvas(self, size: int) -> None:
        if self.length_max > size * math.sqrt(2):
            raise ArgumentError(
                f"Trajectory length {self.length_max} cannot fit on a {size}x{size} canvas")


class GaussianBlurParams(BaseModel):
    """Isotropic Gaussian kernels with sigma ~ Uniform[sigma_min, sigma_max]"""

    sigma_min: float = Field(default=0.5, gt=0)
    sigma_max: float = Field(default=2.0, gt=0)
    seed: int = Field(default=0, ge=0)


def sample_trajectory(params: TrajectoryParams, rng: SeededRng) -> np.ndarray:
    """
    Draw one camera-shake polyline

    Returns an (steps + 1, 2) array of (x, y) vertices starting at the origin;
    consecutive vertices are length / steps apart.
    """
    length = rng.uniform(params.length_min, params.length_max)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    turns = rng.normal(0.0, params.kappa_dir, size=params.steps) if params.kappa_dir > 0 \
        else np.zeros(params.steps)
    turns[0] = 0.0
    headings = heading + np.cumsum(turns)
    step = length / params.steps
    moves = step * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    return np.vstack([np.zeros((1, 2)), np.cumsum(moves, axis=0)])


def trajectory_length(points: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def rasterize_kernel(points: np.ndarray, size: int) -> KernelCanvas:
    """
    Accumulate unit bilinear exposure per vertex on an s x s canvas

    The polyline is shifted so its center of mass sits on the canvas center;
    vertices that still fall outside are clamped and the canvas is flagged.
    """
    if size % 2 == 0:
        raise ArgumentError(f"Kernel canvas size must be odd, got {size}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    center = size // 2
    shifted = points - points.mean(axis=0) + center

    clipped = bool(np.any(shifted < 0) or np.any(shifted > size - 1))
    if clipped:
        logger.warning("Trajectory exceeds the %dx%d canvas and was clipped", size, size)
        shifted = np.clip(shifted, 0, size - 1)

    canvas = np.zeros((size, size), dtype=np.float64)
    x, y = shifted[:, 0], shifted[:, 1]
    x0 = np.minimum(np.floor(x).astype(int), size - 2) if size > 1 else np.zeros(len(x), dtype=int)
    y0 = np.minimum(np.floor(y).astype(int), size - 2) if size > 1 else np.zeros(len(y), dtype=int)
    fx, fy = x - x0, y - y0
    if size == 1:
        canvas[0, 0] = len(points)
    else:
        np.add.at(canvas, (y0, x0), (1 - fx) * (1 - fy))
        np.add.at(canvas, (y0, x0 + 1), fx * (1 - fy))
        np.add.at(canvas, (y0 + 1, x0), (1 - fx) * fy)
        np.add.at(canvas, (y0 + 1, x0 + 1), fx * fy)

    canvas = np.maximum(canvas, 0.0)
    return KernelCanvas(values=canvas / canvas.sum(), clipped=clipped)


def gaussian_kernel(sigma: float, size: int) -> KernelCanvas:
    """Discretized isotropic Gaussian on an odd s x s canvas"""
    if size % 2 == 0:
        raise ArgumentError(f"Kernel canvas size must be odd, got {size}")
    if sigma <= 0:
        raise ArgumentError(f"Gaussian sigma must be positive, got {sigma}")
    offsets = np.arange(size) - size // 2
    profile = np.exp(-0.5 * (offsets / sigma) ** 2)
    values = np.outer(profile, profile)
    return KernelCanvas(values=values / values.sum())


def motion_kernel(params: TrajectoryParams, size: int, rng: SeededRng) -> KernelCanvas:
    return rasterize_kernel(sample_trajectory(params, rng), size)


def delta_kernel(size: int) -> np.ndarray:
    values = np.zeros((size, size))
    values[size // 2, size // 2] = 1.0
    return values


def blur_image(image: np.ndarray, kernel: np.ndarray, sigma: float = 0.0,
               rng: SeededRng = None) -> np.ndarray:
    """Forward model y = image (*) kernel + n with circular boundaries; y is not clipped"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 3:
        kernel = kernel[0]
    blurred = circ_conv2(image, embed_kernel(kernel, image.shape[-2], image.shape[-1]))
    if sigma == 0:
        return blurred
    if rng is None:
        raise ArgumentError("Noisy blur needs an rng")
    return add_gaussian_noise(blurred, sigma, rng)
