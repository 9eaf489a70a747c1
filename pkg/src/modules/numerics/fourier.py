"""
Unitary 2-D DFT and circular convolution

All transforms use the orthonormal normalization (1/sqrt(n) in both
directions), so the forward transform is an isometry and circular
convolution reads  x * k = sqrt(n) F^H (F x  .  F k).
"""

import logging

import numpy as np
from scipy import fft as sp_fft

from src.shared.errors import DimensionError

logger = logging.getLogger(__name__)

IMAGINARY_RESIDUE_WARN = 1e-8


def _as_2d_signal(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.size == 0:
        raise DimensionError("Cannot transform an empty tensor")
    if x.ndim == 1:
        return x.reshape(1, -1)
    return x


def dft2(x: np.ndarray) -> np.ndarray:
    """Unitary DFT over the last two axes; a 1-D input is treated as 1 x n"""
    x = _as_2d_signal(x)
    return sp_fft.fft2(x.astype(np.float64, copy=False) if np.isrealobj(x) else x,
                       axes=(-2, -1), norm="ortho")


def idft2(spectrum: np.ndarray, shape=None) -> np.ndarray:
    """
    Inverse unitary DFT, returning the real part

    Args:
        spectrum: complex array whose last two axes are transformed
        shape: optional expected shape of the spatial result
    """
    spectrum = np.asarray(spectrum)
    if shape is not None and tuple(shape) != spectrum.shape:
        raise DimensionError(f"Spectrum shape {spectrum.shape} does not match expected {tuple(shape)}")
    if spectrum.size == 0:
        raise DimensionError("Cannot transform an empty tensor")

    spatial = sp_fft.ifft2(spectrum, axes=(-2, -1), norm="ortho")
    residue = float(np.max(np.abs(spatial.imag))) if spatial.size else 0.0
    if residue > IMAGINARY_RESIDUE_WARN:
        logger.debug("idft2 discarded imaginary residue of magnitude %.3e", residue)
    return np.ascontiguousarray(spatial.real)


def embed_kernel(kernel: np.ndarray, height: int, width: int) -> np.ndarray:
    """
    Place an s x s kernel on an h x w canvas with its center tap at (0, 0)

    Remaining taps wrap around circularly, so circular convolution with the
    embedded kernel is centered on each output pixel.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 3 and kernel.shape[0] == 1:
        kernel = kernel[0]
    if kernel.ndim != 2:
        raise DimensionError(f"Kernel must be 2-D, got shape {kernel.shape}")
    kh, kw = kernel.shape
    if kh > height or kw > width:
        raise DimensionError(f"Kernel {kernel.shape} does not fit on a {height}x{width} canvas")

    canvas = np.zeros((height, width), dtype=np.float64)
    rows = (np.arange(kh) - kh // 2) % height
    cols = (np.arange(kw) - kw // 2) % width
    canvas[np.ix_(rows, cols)] = kernel
    return canvas


def extract_kernel(canvas: np.ndarray, size: int) -> np.ndarray:
    """Adjoint of embed_kernel: gather the s x s taps back from an embedded canvas"""
    height, width = canvas.shape[-2:]
    if size > height or size > width:
        raise DimensionError(f"Kernel size {size} exceeds canvas {height}x{width}")
    rows = (np.arange(size) - size // 2) % height
    cols = (np.arange(size) - size // 2) % width
    return canvas[..., rows[:, None], cols[None, :]]


def circ_conv2(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """
    Circular convolution of every channel of image with one embedded kernel

    Args:
        image: (c, h, w) or (h, w) array, or 1-D row
        kernel: (h, w) kernel already placed with embed_kernel
    """
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    squeeze_row = image.ndim == 1
    if squeeze_row:
        image = image.reshape(1, -1)
        kernel = kernel.reshape(1, -1)
    if kernel.shape[-2] > image.shape[-2] or kernel.shape[-1] > image.shape[-1]:
        raise DimensionError(f"Kernel {kernel.shape} is larger than image {image.shape}")
    if kernel.shape != image.shape[-2:]:
        raise DimensionError(
            f"Kernel {kernel.shape} must be embedded to the image extent {image.shape[-2:]}")

    n = image.shape[-2] * image.shape[-1]
    product = np.sqrt(n) * dft2(image) * dft2(kernel)
    result = idft2(product)
    return result.reshape(-1) if squeeze_row else result


def _tap_shifts(size: int):
    center = size // 2
    for a in range(size):
        for b in range(size):
            yield a, b, (a - center, b - center)


def circ_conv2_spatial(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """
    Direct-sum circular convolution with an un-embedded s x s kernel

    Sums shifted copies of the image, one per tap; no transforms involved.
    """
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 3:
        kernel = kernel[0]
    if kernel.shape[0] > image.shape[-2] or kernel.shape[1] > image.shape[-1]:
        raise DimensionError(f"Kernel {kernel.shape} is larger than image {image.shape}")
    out = np.zeros_like(image)
    for a, b, shift in _tap_shifts(kernel.shape[0]):
        if kernel[a, b] != 0.0:
            out += kernel[a, b] * np.roll(image, shift, axis=(-2, -1))
    return out


def circ_conv2_spatial_adjoint(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint of circ_conv2_spatial with respect to the image"""
    signal = np.asarray(signal, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 3:
        kernel = kernel[0]
    out = np.zeros_like(signal)
    for a, b, (da, db) in _tap_shifts(kernel.shape[0]):
        if kernel[a, b] != 0.0:
            out += kernel[a, b] * np.roll(signal, (-da, -db), axis=(-2, -1))
    return out


def circ_conv2_spatial_kernel_grad(signal: np.ndarray, image: np.ndarray, size: int) -> np.ndarray:
    """Gradient of <signal, circ_conv2_spatial(image, k)> with respect to the s x s taps of k"""
    signal = np.asarray(signal, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    grad = np.zeros((size, size))
    for a, b, shift in _tap_shifts(size):
        grad[a, b] = np.sum(signal * np.roll(image, shift, axis=(-2, -1)))
    return grad
