"""MSE, PSNR and Gaussian-window SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagecore import ImageError, as_image

__all__ = ["MetricConfig", "mse", "psnr", "ssim", "PSNR_CAP"]

PSNR_CAP = 99.0


@dataclass(frozen=True)
class MetricConfig:
    data_range: float = 1.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and positive")
        for name in ("data_range", "ssim_sigma", "k1", "k2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ImageError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    d = a - b
    return math.fsum((d * d).ravel()) / d.size


def psnr(a, b, cfg: MetricConfig = MetricConfig()) -> float:
    """PSNR in dB, capped at 99 dB for identical inputs."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(cfg.data_range**2 / err))


def _gaussian_taps(window, sigma):
    r = window // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _local_mean(img, taps):
    r = taps.size // 2
    out = ndimage.correlate1d(img, taps, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, taps, axis=1, mode="nearest")
    # keep only windows lying fully inside the image
    return out[r : img.shape[0] - r, r : img.shape[1] - r]


def ssim(a, b, cfg: MetricConfig = MetricConfig()) -> float:
    """Mean SSIM with an 11x11 Gaussian window, averaged over channels.

    Only windows that fit entirely inside the image are scored.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < cfg.ssim_window:
        raise ImageError(f"image {a.shape[:2]} smaller than SSIM window {cfg.ssim_window}")
    taps = _gaussian_taps(cfg.ssim_window, cfg.ssim_sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    scores = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx, my = _local_mean(x, taps), _local_mean(y, taps)
        sxx = _local_mean(x * x, taps) - mx * mx
        syy = _local_mean(y * y, taps) - my * my
        sxy = _local_mean(x * y, taps) - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(math.fsum((num / den).ravel()) / num.size)
    return float(np.clip(math.fsum(scores) / len(scores), -1.0, 1.0))
