"""Dark channel prior: atmospheric light estimation and a baseline dehazer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import as_image, min_filter

__all__ = ["DcpConfig", "dark_channel", "estimate_atmospheric_light", "dcp_dehaze"]


@dataclass(frozen=True)
class DcpConfig:
    window: int = 15
    omega: float = 0.95
    t0: float = 0.1
    top_fraction: float = 0.001

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if not 0 < self.omega <= 1:
            raise ValueError(f"omega must be in (0, 1], got {self.omega}")
        if not 0 < self.t0 < 1:
            raise ValueError(f"t0 must be in (0, 1), got {self.t0}")
        if not 0 < self.top_fraction <= 1:
            raise ValueError(f"top_fraction must be in (0, 1], got {self.top_fraction}")


def dark_channel(y, window: int = 15) -> np.ndarray:
    y = as_image(y, channels=3)
    return min_filter(y.min(axis=2, keepdims=True), window)


def estimate_atmospheric_light(y, cfg: DcpConfig = DcpConfig()) -> float:
    """Scalar airlight from the brightest dark-channel pixels.

    Takes the ``ceil(top_fraction * H * W)`` pixels with the largest dark
    channel (ties broken by row-major order) and returns the largest
    channel-mean intensity of ``y`` among them.
    """
    y = as_image(y, channels=3)
    dark = dark_channel(y, cfg.window).ravel()
    n = max(1, math.ceil(cfg.top_fraction * dark.size))
    # stable sort on -dark keeps row-major order among equal values
    top = np.argsort(-dark, kind="stable")[:n]
    means = _channel_mean(y).ravel()[top]
    return float(means.max())


def _channel_mean(y):
    # offset by the channel minimum so grey pixels give their value exactly
    lo = y.min(axis=2)
    return lo + (y - lo[:, :, None]).sum(axis=2) / y.shape[2]


def dcp_dehaze(y, cfg: DcpConfig = DcpConfig()):
    """Classic DCP dehazing without transmission refinement.

    Returns ``(x_hat, t_hat, A_hat)``.
    """
    y = as_image(y, channels=3)
    A = estimate_atmospheric_light(y, cfg)
    t = 1.0 - cfg.omega * dark_channel(y / A, cfg.window)
    t = np.maximum(t, cfg.t0)
    x = np.clip((y - A) / t + A, 0.0, 1.0)
    return x, t, A
