"""
Image quality metrics and range-error accounting

Estimates are clipped to [0, 1] before PSNR/SSIM; references are assumed to
already live there. SSIM uses an 11 x 11 Gaussian window (sigma 1.5) with
K1 = 0.01, K2 = 0.03 and unit dynamic range, averaged over valid windows.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.shared.errors import DimensionError
from src.shared.run_log_enhancer import RunLogEnhancer

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _same_shape(x: np.ndarray, ref: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(f"Shapes {x.shape} and {ref.shape} differ")
    return x, ref


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """10 log10(1 / MSE) in dB; math.inf when the clipped estimate equals the reference"""
    x, ref = _same_shape(x, ref)
    mse = float(np.mean((np.clip(x, 0.0, 1.0) - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _grayscale(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        return image.mean(axis=0)
    if image.ndim == 2:
        return image
    raise DimensionError(f"SSIM needs a (c, h, w) or (h, w) image, got {image.shape}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    profile = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    window = np.outer(profile, profile)
    return window / window.sum()


def ssim(x: np.ndarray, ref: np.ndarray) -> float:
    """
    Mean structural similarity of the grayscale images

    Images smaller than the window use a window shrunk to the smaller extent,
    so there is always at least one valid position.
    """
    x, ref = _same_shape(x, ref)
    a = _grayscale(np.clip(x, 0.0, 1.0))
    b = _grayscale(np.clip(ref, 0.0, 1.0))
    size = min(SSIM_WINDOW, a.shape[0], a.shape[1])
    window = gaussian_window(size)

    def local(values: np.ndarray) -> np.ndarray:
        return np.tensordot(sliding_window_view(values, (size, size)), window, axes=([2, 3], [0, 1]))

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_a, mu_b = local(a), local(b)
    var_a = local(a * a) - mu_a * mu_a
    var_b = local(b * b) - mu_b * mu_b
    cov = local(a * b) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))


def range_error(i_test: np.ndarray, i_range: np.ndarray) -> float:
    """||i_test - i_range||, the distance from a test image to its projection onto the range"""
    i_test, i_range = _same_shape(i_test, i_range)
    return float(np.linalg.norm(i_test - i_range))


def overall_error(estimate: np.ndarray, i_test: np.ndarray) -> float:
    estimate, i_test = _same_shape(estimate, i_test)
    return float(np.linalg.norm(estimate - i_test))


@dataclass
class MetricReport:
    """Metrics of one estimate; error fields need the range projection"""

    psnr_db: float
    ssim: float
    range_error: Optional[float] = None
    overall_error: Optional[float] = None
    overall_bound: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def evaluate_estimate(estimate: np.ndarray, reference: np.ndarray,
                      i_range: Optional[np.ndarray] = None) -> MetricReport:
    """
    PSNR/SSIM against the reference, plus the triangle-inequality bookkeeping
    ||est - ref|| <= ||est - i_range|| + ||i_range - ref|| when i_range is given
    """
    report = MetricReport(psnr_db=psnr(estimate, reference), ssim=ssim(estimate, reference))
    if i_range is not None:
        report.range_error = range_error(reference, i_range)
        report.overall_error = overall_error(estimate, reference)
        report.overall_bound = overall_error(estimate, i_range) + report.range_error
    return report


def summarize_reports(reports: List[MetricReport]) -> Dict[str, Dict[str, float]]:
    """Suite count / mean / std of every populated metric"""
    summary = {}
    for name in ("psnr_db", "ssim", "range_error", "overall_error"):
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if values:
            summary[name] = RunLogEnhancer.get_statistics(values)
    return summary
