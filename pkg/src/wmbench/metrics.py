"""Performance-evaluation library: full-reference quality, block-level
authentication accuracy and timing.

PSNR of identical images is ``math.inf`` (stored as ``"identical"``);
a rate that has an empty denominator is ``None`` (not applicable).
"""

from __future__ import annotations

import math
import time
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import TamperMap, ValidationError, Work, as_pixels

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

IDENTICAL = math.inf


def _pair(reference, test):
    a, b = as_pixels(reference), as_pixels(test)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(reference, test) -> float:
    a, b = _pair(reference, test)
    return float(np.mean((a - b) ** 2))


def psnr(reference, test) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images match."""
    err = mse(reference, test)
    if err == 0:
        return IDENTICAL
    return 10.0 * math.log10(PEAK ** 2 / err)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim_map(reference, test) -> np.ndarray:
    a, b = _pair(reference, test)
    if min(a.shape) < SSIM_WINDOW:
        raise ValidationError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, test) -> float:
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), valid region only."""
    smap = ssim_map(reference, test)
    if np.array_equal(as_pixels(reference), as_pixels(test)):
        return 1.0  # the map is 1 up to rounding; report it exactly
    return float(np.mean(smap))


def confusion(truth: TamperMap, reported: TamperMap) -> tuple[int, int, int, int]:
    """(true positives, false positives, true negatives, false negatives)."""
    if truth.flags.shape != reported.flags.shape:
        raise ValidationError(
            f"block grid mismatch {truth.flags.shape} vs {reported.flags.shape}")
    t, r = truth.flags, reported.flags
    return (int(np.sum(t & r)), int(np.sum(~t & r)), int(np.sum(~t & ~r)), int(np.sum(t & ~r)))


def fp_fn_rates(truth: TamperMap, reported: TamperMap) -> tuple[Optional[float], Optional[float]]:
    """Per-class error rates over 8x8 blocks.

    fp is normalised by the number of untampered blocks, fn by the number of
    tampered ones; an empty class gives ``None``.
    """
    tp, fp, tn, fn = confusion(truth, reported)
    fp_rate = fp / (fp + tn) if fp + tn else None
    fn_rate = fn / (fn + tp) if fn + tp else None
    return fp_rate, fn_rate


def timed(step: Callable, *args, **kwargs):
    """Run ``step`` once; return ``(result, wall_seconds)``."""
    start = time.perf_counter()
    result = step(*args, **kwargs)
    return result, time.perf_counter() - start


def recovered_quality(original_cover: Work, restored: Optional[Work],
                      metric: Callable[[Work, Work], float]) -> Optional[float]:
    """Full-reference quality of the whole restored work; ``None`` without one."""
    if restored is None:
        return None
    return metric(original_cover, restored)


# plugin-contract adapters

def _psnr_plugin(reference, test, params):
    return psnr(reference, test)


def _ssim_plugin(reference, test, params):
    return ssim(reference, test)


def _fp_plugin(truth, reported, params):
    return fp_fn_rates(truth, reported)[0]


def _fn_plugin(truth, reported, params):
    return fp_fn_rates(truth, reported)[1]
