"""Homogeneous-atmosphere haze model: synthesis and transmission recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import ImageError, as_depth, as_image, as_transmission

__all__ = [
    "ScatterParams",
    "transmission_from_depth",
    "synthesize_hazy",
    "log_transmission_from_pair",
    "transmission_from_pair",
    "transmission_from_pair_nh",
    "reduce_transmission",
]

RECOVERED_T_MIN = 1e-4
NH_T_FLOOR = 0.05


@dataclass(frozen=True)
class ScatterParams:
    beta: float
    A: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        _check_airlight(self.A)


def _check_airlight(A: float) -> float:
    A = float(A)
    if not 0.0 < A <= 1.0:
        raise ValueError(f"atmospheric light must lie in (0, 1], got {A}")
    return A


def _broadcast_t(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    if t.shape[:2] != x.shape[:2]:
        raise ImageError(f"spatial shape mismatch: {t.shape[:2]} vs {x.shape[:2]}")
    if t.shape[2] not in (1, x.shape[2]):
        raise ImageError(f"cannot broadcast {t.shape[2]}-channel t over {x.shape[2]} channels")
    return t


def transmission_from_depth(d, beta: float) -> np.ndarray:
    """``exp(-beta * d)`` elementwise."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    d = as_depth(d)
    return np.exp(-beta * d)


def synthesize_hazy(x, t, A: float) -> np.ndarray:
    """Apply the scattering model ``y = x * t + A * (1 - t)``.

    A single-channel ``t`` is broadcast over the colour channels.  ``t`` is
    only required to be in (0, 1] so that the pure-airlight limit can be
    approached numerically.
    """
    x = as_image(x)
    t = _broadcast_t(as_transmission(t), x)
    A = _check_airlight(A)
    return x * t + A * (1.0 - t)


def _pair_log_ratios(y, x, A, guard):
    y = as_image(y)
    x = as_image(x)
    if y.shape != x.shape:
        raise ImageError(f"shape mismatch: {y.shape} vs {x.shape}")
    A = _check_airlight(A)
    den = x - A
    num = y - A
    bad_den = np.abs(den) <= guard
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    bad = bad_den | ~(ratio > 0)
    if np.any(bad):
        i, j, c = np.argwhere(bad)[0]
        reason = "denominator within guard of A" if bad_den[i, j, c] else "non-positive ratio"
        raise ImageError(
            f"cannot recover transmission at pixel ({i}, {j}) channel {c}: {reason}"
        )
    return np.log(ratio)


def log_transmission_from_pair(y, x, A: float, guard: float = 1e-3) -> np.ndarray:
    """Recover ``-beta * d = log((y - A) / (x - A))`` as a 1-channel map.

    The log-ratio is taken per colour channel and the channel results are
    averaged.  Raises :class:`ImageError` naming the first offending pixel
    when ``|x - A| <= guard`` or the ratio is not positive.
    """
    logs = _pair_log_ratios(y, x, A, guard)
    return logs.mean(axis=2, keepdims=True)


def transmission_from_pair(y, x, A: float, guard: float = 1e-3) -> np.ndarray:
    """``exp`` of :func:`log_transmission_from_pair`, clamped to [1e-4, 1]."""
    return np.clip(np.exp(log_transmission_from_pair(y, x, A, guard)), RECOVERED_T_MIN, 1.0)


def transmission_from_pair_nh(y, x, eps: float = 1e-6, t_floor: float = NH_T_FLOOR) -> np.ndarray:
    """Per-channel transmission for real haze pairs, assuming ``A = 1``.

    ``t = (y - 1) / (x - 1 + eps)`` clamped to ``[t_floor, 1]``; pixels that
    violate the model (ratio outside the unit interval) are clamped rather
    than rejected.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    y = as_image(y, channels=3)
    x = as_image(x, channels=3)
    if y.shape != x.shape:
        raise ImageError(f"shape mismatch: {y.shape} vs {x.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (y - 1.0) / (x - 1.0 + eps)
    t = np.where(np.isfinite(t), t, t_floor)
    return np.clip(t, t_floor, 1.0)


def reduce_transmission(t, mode: str = "mean") -> np.ndarray:
    """Collapse a 3-channel transmission map to one channel.

    ``mode`` is ``"mean"`` (arithmetic), ``"geometric"`` (mean in log space,
    which matches the log-domain prior) or ``"min"``.  1-channel input is
    returned unchanged.
    """
    t = as_transmission(t)
    if t.shape[2] == 1:
        return t
    if mode == "mean":
        return t.mean(axis=2, keepdims=True)
    if mode == "geometric":
        return np.exp(np.log(t).mean(axis=2, keepdims=True))
    if mode == "min":
        return t.min(axis=2, keepdims=True)
    raise ValueError(f"unknown reduction mode {mode!r}")
