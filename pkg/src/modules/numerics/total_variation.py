"""
Anisotropic smoothed total variation

tv(x) = sum over channels of sqrt(dh^2 + eps) + sqrt(dv^2 + eps), with
non-circular forward differences (the last row/column has none).
"""

import numpy as np

TV_EPSILON = 1e-8


def _as_channels(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image[None]
    return image


def tv(image: np.ndarray, eps: float = TV_EPSILON) -> float:
    """Smoothed anisotropic total variation of a (c, h, w) or (h, w) image"""
    x = _as_channels(image)
    horizontal = np.diff(x, axis=-1)
    vertical = np.diff(x, axis=-2)
    return float(np.sqrt(horizontal ** 2 + eps).sum() + np.sqrt(vertical ** 2 + eps).sum())


def tv_grad(image: np.ndarray, eps: float = TV_EPSILON) -> np.ndarray:
    """Exact gradient of tv() with the same shape as the input"""
    original_ndim = np.ndim(image)
    x = _as_channels(image)
    grad = np.zeros_like(x)

    horizontal = np.diff(x, axis=-1)
    weight_h = horizontal / np.sqrt(horizontal ** 2 + eps)
    grad[..., :, 1:] += weight_h
    grad[..., :, :-1] -= weight_h

    vertical = np.diff(x, axis=-2)
    weight_v = vertical / np.sqrt(vertical ** 2 + eps)
    grad[..., 1:, :] += weight_v
    grad[..., :-1, :] -= weight_v

    return grad[0] if original_ndim == 2 else grad
