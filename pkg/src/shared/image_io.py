"""
Image and kernel file I/O

PNG (via Pillow) is the human-visible format; raw little-endian float32 is
the lossless numeric format. Arrays are (c, h, w) with values in [0, 1] for
images, (s, s) for kernels.
"""

import logging
import math
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from src.shared.errors import ArgumentError, ConfigError, DimensionError, FormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_f32(array: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return path


def infer_shape(count: int) -> Tuple[int, ...]:
    """Guess a shape for a raw file: square single channel, then square RGB"""
    side = math.isqrt(count)
    if side * side == count:
        return (side, side)
    if count % 3 == 0:
        side = math.isqrt(count // 3)
        if side * side * 3 == count:
            return (3, side, side)
    raise FormatError(f"Cannot infer a square shape for {count} float32 values", offset=0)


def read_f32(path: PathLike, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"File not found: {path}")
    payload = path.read_bytes()
    if len(payload) % 4:
        raise FormatError(f"{path.name} is not a whole number of float32 values",
                          offset=len(payload) - len(payload) % 4)
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if shape is None:
        shape = infer_shape(values.size)
    if int(np.prod(shape)) != values.size:
        raise FormatError(f"{path.name} holds {values.size} values, expected shape {shape}",
                          offset=len(payload))
    return values.reshape(shape)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(c, h, w) or (h, w) float image in [0, 1] to an 8-bit array Pillow accepts"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[0] == 1:
            image = image[0]
        elif image.shape[0] == 3:
            image = image.transpose(1, 2, 0)
        else:
            raise DimensionError(f"PNG output supports 1 or 3 channels, got {image.shape[0]}")
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(image: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")
    return path


def write_kernel_png(kernel: np.ndarray, path: PathLike) -> Path:
    """Kernel visualization scaled so the largest tap is white"""
    kernel = np.asarray(kernel, dtype=np.float64)
    peak = kernel.max()
    return write_png(kernel / peak if peak > 0 else kernel, path)


def read_png(path: PathLike, channels: Optional[int] = None) -> np.ndarray:
    """Load a PNG as a (c, h, w) float array in [0, 1]"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"File not found: {path}")
    with Image.open(path) as img:
        if channels == 1:
            img = img.convert("L")
        elif channels == 3 or img.mode not in ("L",):
            img = img.convert("RGB")
        data = np.asarray(img, dtype=np.float64) / 255.0
    if data.ndim == 2:
        return data[None]
    return data.transpose(2, 0, 1)


def read_image(path: PathLike, channels: Optional[int] = None) -> np.ndarray:
    """PNG or raw f32 image as (c, h, w)"""
    path = Path(path)
    if path.suffix.lower() == ".f32":
        image = read_f32(path)
        return image[None] if image.ndim == 2 else image
    return read_png(path, channels)


def write_image(image: np.ndarray, stem: PathLike) -> Tuple[Path, Path]:
    """Write both <stem>.png and <stem>.f32"""
    stem = Path(stem)
    return write_png(image, stem.with_suffix(".png")), write_f32(image, stem.with_suffix(".f32"))


def read_kernel(path: PathLike) -> np.ndarray:
    """Kernel renormalized to sum 1; PNG kernels are stored with the peak at white"""
    path = Path(path)
    kernel = read_f32(path) if path.suffix.lower() == ".f32" else read_png(path, channels=1)[0]
    if kernel.ndim == 3:
        kernel = kernel[0]
    total = float(kernel.sum())
    if not total > 0:
        raise ArgumentError(f"Kernel {path} has no positive mass (taps sum to {total!r})")
    return kernel / total
