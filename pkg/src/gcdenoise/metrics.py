"""PSNR and SSIM against a ground-truth 8-bit image."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imgio import validate_image

PEAK = 255.0
SSIM_WINDOW = 8
C1 = (0.01 * PEAK) ** 2
C2 = (0.03 * PEAK) ** 2


@dataclass(frozen=True)
class QualityReport:
    psnr_db: float
    ssim: float
    mse: float

    def csv(self) -> str:
        return f"{format_psnr(self.psnr_db)},{self.ssim:.6f},{self.mse:.10g}"


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.6f}"


def _pair(reference, test) -> tuple[np.ndarray, np.ndarray]:
    a = validate_image(reference).astype(np.float64)
    b = validate_image(test).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def mse(reference, test) -> float:
    a, b = _pair(reference, test)
    return float(np.mean((a - b) ** 2))


def psnr(reference, test) -> float:
    """``10 log10(255^2 / MSE)`` in dB; ``inf`` for identical images."""
    err = mse(reference, test)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / err)


def ssim(reference, test) -> float:
    """Mean SSIM over all 8x8 windows (stride 1, uniform weights).

    Window statistics use population (1/64) moments.
    """
    a, b = _pair(reference, test)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    win = (SSIM_WINDOW, SSIM_WINDOW)
    axes = (-2, -1)
    wa = sliding_window_view(a, win)
    wb = sliding_window_view(b, win)
    mu_a = wa.mean(axis=axes)
    mu_b = wb.mean(axis=axes)
    var_a = (wa * wa).mean(axis=axes) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=axes) - mu_b * mu_b
    cov = (wa * wb).mean(axis=axes) - mu_a * mu_b
    index = ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / (
        (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2))
    return float(index.mean())


def evaluate(reference, test) -> QualityReport:
    return QualityReport(psnr(reference, test), ssim(reference, test), mse(reference, test))
