"""Variational Bayesian modelling of haze degradation.

Submodules: :mod:`imagecore` (arrays and file formats), :mod:`hazemodel`
(scattering model), :mod:`dcp` (dark channel prior), :mod:`variational`
(negative ELBO), :mod:`autodiff`, :mod:`nets`, :mod:`trainer`,
:mod:`metrics`, :mod:`datagen` and :mod:`cli`.
"""

from .dcp import DcpConfig, dark_channel, dcp_dehaze, estimate_atmospheric_light
from .hazemodel import (
    log_transmission_from_pair,
    synthesize_hazy,
    transmission_from_depth,
    transmission_from_pair_nh,
)
from .metrics import MetricConfig, mse, psnr, ssim
from .variational import (
    HyperParams,
    ObjectiveBreakdown,
    kl_laplace,
    kl_lognormal,
    likelihood_term,
    negative_elbo,
    objective_grads,
)

__version__ = "0.1.0"
