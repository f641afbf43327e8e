"""Negative evidence lower bound for the dehazing posterior.

The bound has three analytic parts, each summed over every site of the
image:

* expected Gaussian log-likelihood of the hazy observation given the
  posterior means ``phi`` (clean image) and ``nu`` (transmission),
* KL between the Laplace posterior ``Laplace(phi, eps1_2)`` and the
  Laplace prior centred on the clean image ``x``,
* KL between the Lognormal posterior ``Lognormal(log nu, eps2_2)`` and the
  Lognormal prior centred on ``log t``.

``eps1_2`` is used directly as the Laplace scale and ``eps2_2`` directly as
the variance of the log, with no square roots taken.  All sums are
evaluated with :func:`math.fsum` so reported values do not depend on array
layout.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .imagecore import ImageError, as_image

__all__ = [
    "HyperParams",
    "ObjectiveBreakdown",
    "likelihood_term",
    "kl_laplace",
    "kl_lognormal",
    "negative_elbo",
    "negative_elbo_sites",
    "objective_grads",
    "kl_quadrature_oracle",
    "QuadratureError",
]


@dataclass(frozen=True)
class HyperParams:
    sigma2: float = 1e-5
    eps1_2: float = 1e-6
    eps2_2: float = 1e-5
    A: float = 1.0

    def __post_init__(self):
        for name in ("sigma2", "eps1_2", "eps2_2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.A <= 1:
            raise ValueError(f"A must lie in (0, 1], got {self.A}")

    def replace(self, **kw) -> "HyperParams":
        return HyperParams(**{**asdict(self), **kw})


@dataclass(frozen=True)
class ObjectiveBreakdown:
    likelihood: float
    kl_z: float
    kl_tau: float
    negative_elbo: float

    @classmethod
    def from_terms(cls, likelihood: float, kl_z: float, kl_tau: float) -> "ObjectiveBreakdown":
        return cls(likelihood, kl_z, kl_tau, -likelihood + kl_z + kl_tau)

    def as_dict(self) -> dict:
        return asdict(self)


def _aligned(a, b, what):
    if a.shape[:2] != b.shape[:2]:
        raise ImageError(f"{what}: spatial shape mismatch {a.shape} vs {b.shape}")


def _nu_for(nu, y):
    _aligned(nu, y, "nu")
    if nu.shape[2] not in (1, y.shape[2]):
        raise ImageError(f"nu has {nu.shape[2]} channels, image has {y.shape[2]}")
    return nu


def _residual(y, phi, nu, A):
    return y - (phi * nu + A * (1.0 - nu))


def _likelihood_sites(y, phi, nu, hp):
    r = _residual(y, phi, nu, hp.A)
    const = -0.5 * math.log(2.0 * math.pi * hp.sigma2)
    return const - (r * r + hp.sigma2) / (2.0 * hp.sigma2)


def _kl_laplace_sites(phi, x, eps1_2):
    u = np.abs(phi - x) / eps1_2
    # expm1 keeps the small-difference regime accurate: e^-u + u - 1
    return np.expm1(-u) + u


def _kl_lognormal_sites(nu, t, eps2_2):
    d = np.log(nu) - np.log(t)
    return d * d / (2.0 * eps2_2)


def likelihood_term(y, phi, nu, hp: HyperParams) -> float:
    """Expected Gaussian log-likelihood, summed over all pixel-channel sites."""
    y = as_image(y)
    phi = as_image(phi)
    if phi.shape != y.shape:
        raise ImageError(f"phi shape {phi.shape} does not match y {y.shape}")
    nu = _nu_for(as_image(nu), y)
    return math.fsum(_likelihood_sites(y, phi, nu, hp).ravel())


def _check_laplace(phi, x, eps1_2):
    if not eps1_2 > 0:
        raise ValueError("eps1_2 must be positive")
    phi = as_image(phi)
    x = as_image(x)
    if phi.shape != x.shape:
        raise ImageError(f"shape mismatch {phi.shape} vs {x.shape}")
    return phi, x


def _check_lognormal(nu, t, eps2_2):
    if not eps2_2 > 0:
        raise ValueError("eps2_2 must be positive")
    nu = as_image(nu)
    t = as_image(t)
    if nu.shape != t.shape:
        raise ImageError(f"shape mismatch {nu.shape} vs {t.shape}")
    if np.any(nu <= 0) or np.any(t <= 0):
        raise ImageError("lognormal parameters must be strictly positive")
    return nu, t


def kl_laplace(phi, x, eps1_2: float) -> float:
    phi, x = _check_laplace(phi, x, eps1_2)
    return math.fsum(_kl_laplace_sites(phi, x, eps1_2).ravel())


def kl_lognormal(nu, t, eps2_2: float) -> float:
    nu, t = _check_lognormal(nu, t, eps2_2)
    return math.fsum(_kl_lognormal_sites(nu, t, eps2_2).ravel())


def negative_elbo(y, x, t, phi, nu, hp: HyperParams) -> ObjectiveBreakdown:
    lik = likelihood_term(y, phi, nu, hp)
    kz = kl_laplace(phi, x, hp.eps1_2)
    kt = kl_lognormal(nu, t, hp.eps2_2)
    return ObjectiveBreakdown.from_terms(lik, kz, kt)


def negative_elbo_sites(y, x, t, phi, nu, hp: HyperParams) -> np.ndarray:
    """Per-site contributions whose sum is the negative ELBO.

    Useful for finite differences: subtracting two of these site by site
    before summing avoids the cancellation error of differencing two large
    totals.
    """
    y = as_image(y)
    phi = as_image(phi)
    nu = _nu_for(as_image(nu), y)
    phi, x = _check_laplace(phi, x, hp.eps1_2)
    nu, t = _check_lognormal(nu, t, hp.eps2_2)
    return np.concatenate(
        [
            -_likelihood_sites(y, phi, nu, hp).ravel(),
            _kl_laplace_sites(phi, x, hp.eps1_2).ravel(),
            _kl_lognormal_sites(nu, t, hp.eps2_2).ravel(),
        ]
    )


def objective_grads(y, x, t, phi, nu, hp: HyperParams):
    """Analytic gradients of :func:`negative_elbo` w.r.t. ``phi`` and ``nu``.

    The subgradient of ``|phi - x|`` at zero is taken as zero.  When ``nu``
    has one channel its gradient sums the per-channel likelihood terms.
    """
    y = as_image(y)
    x = as_image(x)
    phi = as_image(phi)
    nu = _nu_for(as_image(nu), y)
    t = as_image(t)
    if t.shape != nu.shape:
        raise ImageError(f"t shape {t.shape} does not match nu {nu.shape}")
    r = _residual(y, phi, nu, hp.A)

    diff = phi - x
    kl_z_grad = np.sign(diff) * (-np.expm1(-np.abs(diff) / hp.eps1_2)) / hp.eps1_2
    g_phi = -r * nu / hp.sigma2 + kl_z_grad

    g_nu_lik = -r * (phi - hp.A) / hp.sigma2
    if nu.shape[2] == 1 and y.shape[2] != 1:
        g_nu_lik = g_nu_lik.sum(axis=2, keepdims=True)
    g_nu = g_nu_lik + (np.log(nu) - np.log(t)) / (hp.eps2_2 * nu)
    return g_phi, g_nu


class QuadratureError(RuntimeError):
    pass


def _laplace_logpdf(loc, b):
    c = -math.log(2.0 * b)
    return lambda u: c - abs(u - loc) / b


def _lognormal_logpdf(m, s2):
    c = -0.5 * math.log(2.0 * math.pi * s2)
    return lambda u: c - math.log(u) - (math.log(u) - m) ** 2 / (2.0 * s2)


def kl_quadrature_oracle(kind: str, q_loc: float, p_loc: float, scale: float) -> float:
    """KL(q || p) by adaptive numerical integration of the two densities.

    ``kind="laplace"``: locations and shared scale ``b`` of two Laplace laws.
    ``kind="lognormal"``: log-space locations and shared log-variance of two
    Lognormal laws, integrated over the positive half-line.
    The integration window covers q out to 60 (Laplace) or 40 (Lognormal)
    scale units, beyond which the neglected mass is below 1e-17.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    if kind == "laplace":
        logq, logp = _laplace_logpdf(q_loc, scale), _laplace_logpdf(p_loc, scale)
        lo, hi = q_loc - 60.0 * scale, q_loc + 60.0 * scale
        kinks = [q_loc, p_loc]
    elif kind == "lognormal":
        s = math.sqrt(scale)
        logq, logp = _lognormal_logpdf(q_loc, scale), _lognormal_logpdf(p_loc, scale)
        lo, hi = math.exp(q_loc - 40.0 * s), math.exp(q_loc + 40.0 * s)
        kinks = [math.exp(q_loc)]
    else:
        raise ValueError(f"unknown kind {kind!r}")

    def integrand(u):
        lq = logq(u)
        return math.exp(lq) * (lq - logp(u))

    points = sorted(k for k in kinks if lo < k < hi)
    out = integrate.quad(
        integrand, lo, hi, points=points or None, epsabs=1e-10, epsrel=1e-12,
        limit=1000, full_output=True,
    )
    if len(out) > 3:
        raise QuadratureError(f"quadrature did not converge: {out[3]}")
    return out[0]
