"""Joint training of the dehazing and transmission networks.

Both networks are updated every step from the one shared negative ELBO.
Each batch element gets its own graph; parameter gradients are summed in
element order, so results do not depend on how elements are scheduled.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import nets
from .datagen import synthetic_dataset
from .dcp import DcpConfig, estimate_atmospheric_light
from .hazemodel import reduce_transmission
from .imagecore import as_image
from .metrics import MetricConfig, mse, psnr, ssim
from .variational import HyperParams, ObjectiveBreakdown, negative_elbo, negative_elbo_sites, objective_grads

__all__ = [
    "TrainConfig",
    "TrainLogRecord",
    "TrainingDiverged",
    "objective_graph",
    "train",
    "evaluate",
    "end_to_end_gradcheck",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    optimizer: str = "adam"
    steps: int = 2000
    batch_size: int = 4
    patch_size: int = 64
    seed: int = 0
    hyper: HyperParams = field(default_factory=HyperParams)
    a_mode: str = "ground-truth"  # or "dcp"
    t_reduce: str = "mean"
    dnet_widths: tuple = nets.DNET_SPEC.widths
    tnet_widths: tuple = nets.TNET_SPEC.widths
    t_min: float = nets.T_MIN
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        for name in ("steps", "batch_size", "patch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.a_mode not in ("ground-truth", "dcp"):
            raise ValueError(f"unknown atmospheric light mode {self.a_mode!r}")
        object.__setattr__(self, "dnet_widths", tuple(self.dnet_widths))
        object.__setattr__(self, "tnet_widths", tuple(self.tnet_widths))

    def dnet_spec(self):
        return nets.NetSpec("dnet", self.dnet_widths, self.t_min)

    def tnet_spec(self):
        return nets.NetSpec("tnet", self.tnet_widths, self.t_min)

    def as_dict(self):
        d = asdict(self)
        d["dnet_widths"] = list(self.dnet_widths)
        d["tnet_widths"] = list(self.tnet_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("hyper"), dict):
            d["hyper"] = HyperParams(**d["hyper"])
        return cls(**d)


@dataclass
class TrainLogRecord:
    step: int
    likelihood: float
    kl_z: float
    kl_tau: float
    negative_elbo: float
    wall_time: float

    def to_json(self):
        return json.dumps(asdict(self))


def objective_graph(phi: ad.Tensor, nu: ad.Tensor, y, x, t, hp: HyperParams):
    """The three objective terms as graph nodes ``(likelihood, kl_z, kl_tau)``."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    A = hp.A
    # phi * nu + A * (1 - nu) == phi * nu - A * nu + A
    pred = ad.add(ad.sub(ad.mul(phi, nu), ad.scalar_mul(nu, A)), A)
    r = ad.sub(y, pred)
    const = -0.5 * math.log(2.0 * math.pi * hp.sigma2) - 0.5
    lik = ad.add(ad.scalar_mul(ad.sum(ad.square(r)), -1.0 / (2.0 * hp.sigma2)), const * y.size)

    u = ad.scalar_mul(ad.abs(ad.sub(phi, x)), 1.0 / hp.eps1_2)
    kl_z = ad.sum(ad.sub(ad.add(ad.exp(ad.scalar_mul(u, -1.0)), u), 1.0))

    d = ad.sub(ad.log(nu), np.log(t))
    kl_tau = ad.scalar_mul(ad.sum(ad.square(d)), 1.0 / (2.0 * hp.eps2_2))
    return lik, kl_z, kl_tau


def _neg_elbo_node(lik, kl_z, kl_tau):
    return ad.add(ad.sub(kl_z, lik), kl_tau)


def _element_grads(theta, psi, y, x, t, hp):
    """Forward + backward for one element; returns flat grads and the breakdown."""
    leaves_d, leaves_t = {}, {}
    y_node = ad.Tensor(y)
    phi = nets.forward(theta, y_node, leaves_d)
    nu = nets.forward(psi, y_node, leaves_t)
    terms = objective_graph(phi, nu, y, x, t, hp)
    ad.backward(_neg_elbo_node(*terms))
    g_theta = np.concatenate([leaves_d[k].grad.ravel() for k in theta.order()])
    g_psi = np.concatenate([leaves_t[k].grad.ravel() for k in psi.order()])
    raw = [float(n.value) for n in terms]
    if not all(math.isfinite(v) for v in raw):
        # let the caller report divergence instead of failing input validation
        return g_theta, g_psi, ObjectiveBreakdown.from_terms(*raw)
    breakdown = negative_elbo(y, x, t, phi.value, nu.value, hp)
    return g_theta, g_psi, breakdown


class _Adam:
    def __init__(self, n, cfg: TrainConfig):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.k = 0
        self.cfg = cfg

    def step(self, w, g):
        c = self.cfg
        self.k += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        m_hat = self.m / (1 - c.beta1**self.k)
        v_hat = self.v / (1 - c.beta2**self.k)
        return w - c.lr * m_hat / (np.sqrt(v_hat) + c.adam_eps)


class _SGD:
    def __init__(self, n, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, w, g):
        return w - self.cfg.lr * g


def _prepare(dataset, cfg: TrainConfig):
    """Per-image (y, x, t_1ch, A), with A from ground truth or DCP."""
    prepared = []
    dcp_cfg = DcpConfig()
    for i, trip in enumerate(dataset):
        y = as_image(trip.hazy, channels=3)
        x = as_image(trip.clean, channels=3)
        t = reduce_transmission(trip.trans, cfg.t_reduce)
        if not (y.shape == x.shape and t.shape[:2] == y.shape[:2]):
            raise ValueError(f"triplet {i} is misaligned")
        if cfg.a_mode == "ground-truth" and trip.A is not None:
            A = float(trip.A)
        else:
            A = estimate_atmospheric_light(y, dcp_cfg)
        prepared.append((y, x, t, A))
    return prepared


def _crop(rng, arrays, size):
    h, w = arrays[0].shape[:2]
    ph, pw = min(size, h), min(size, w)
    i = int(rng.integers(0, h - ph + 1))
    j = int(rng.integers(0, w - pw + 1))
    return [a[i : i + ph, j : j + pw] for a in arrays]


def train(dataset, cfg: TrainConfig, theta=None, psi=None, on_step=None):
    """Minimise the negative ELBO jointly over both networks.

    Returns ``(theta, psi, log)``.  ``on_step(record)`` is called after each
    step if given.  Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    if not dataset:
        raise ValueError("empty dataset")
    prepared = _prepare(dataset, cfg)
    rng = np.random.default_rng(cfg.seed)
    init_seeds = rng.integers(0, 2**31, 2)
    if theta is None:
        theta = nets.init_weights(cfg.dnet_spec(), int(init_seeds[0]))
    if psi is None:
        psi = nets.init_weights(cfg.tnet_spec(), int(init_seeds[1]))
    w_theta, w_psi = theta.flatten(), psi.flatten()
    opt_cls = _Adam if cfg.optimizer == "adam" else _SGD
    opt_theta, opt_psi = opt_cls(w_theta.size, cfg), opt_cls(w_psi.size, cfg)

    log = []
    t_start = time.perf_counter()
    order = np.array([], dtype=int)
    for step in range(cfg.steps):
        if order.size < cfg.batch_size:
            order = np.concatenate([order, rng.permutation(len(prepared))])
        batch, order = order[: cfg.batch_size], order[cfg.batch_size :]
        g_theta = np.zeros_like(w_theta)
        g_psi = np.zeros_like(w_psi)
        lik = kz = kt = 0.0
        for idx in batch:
            y, x, t, A = prepared[idx]
            y, x, t = _crop(rng, (y, x, t), cfg.patch_size)
            hp = cfg.hyper.replace(A=A)
            gt, gp, br = _element_grads(theta, psi, y, x, t, hp)
            g_theta += gt
            g_psi += gp
            lik += br.likelihood
            kz += br.kl_z
            kt += br.kl_tau
        n = len(batch)
        br = ObjectiveBreakdown.from_terms(lik / n, kz / n, kt / n)
        if not math.isfinite(br.negative_elbo):
            raise TrainingDiverged(step, br.negative_elbo)
        w_theta = opt_theta.step(w_theta, g_theta / n)
        w_psi = opt_psi.step(w_psi, g_psi / n)
        theta = theta.with_flat(w_theta)
        psi = psi.with_flat(w_psi)
        rec = TrainLogRecord(
            step, br.likelihood, br.kl_z, br.kl_tau, br.negative_elbo,
            time.perf_counter() - t_start,
        )
        log.append(rec)
        if on_step is not None:
            on_step(rec)
    return theta, psi, log


def evaluate(theta, psi, dataset, cfg: MetricConfig = MetricConfig(), t_reduce="mean"):
    """PSNR/SSIM of D-Net outputs and, when ``psi`` is given, MSE/SSIM of T-Net outputs.

    D-Net outputs are clipped to [0, 1] before scoring.  The D-Net numbers
    depend only on ``theta`` and the hazy inputs.
    """
    per_image = []
    for trip in dataset:
        y = as_image(trip.hazy, channels=3)
        x = as_image(trip.clean, channels=3)
        phi = np.clip(nets.dnet_forward(theta, y), 0.0, 1.0)
        rec = {
            "psnr": psnr(phi, x, cfg),
            "ssim": ssim(phi, x, cfg),
            "mse": mse(phi, x),
            "hazy_psnr": psnr(y, x, cfg),
            "hazy_ssim": ssim(y, x, cfg),
        }
        if psi is not None:
            t = reduce_transmission(trip.trans, t_reduce)
            nu = nets.tnet_forward(psi, y)
            rec["trans_mse"] = mse(nu, t)
            rec["trans_ssim"] = ssim(nu, t, cfg)
        per_image.append(rec)
    keys = per_image[0].keys() if per_image else []
    means = {k: math.fsum(r[k] for r in per_image) / len(per_image) for k in keys}
    return {"mean": means, "per_image": per_image}


def _tiny_instance(seed, size, width, hp_base):
    rng = np.random.default_rng(seed)
    trip = synthetic_dataset(1, size=size, seed=seed)[0]
    hp = hp_base.replace(A=trip.A)
    theta = nets.init_weights(nets.NetSpec("dnet", (3, width, width, 3)), seed)
    psi = nets.init_weights(nets.NetSpec("tnet", (3, width, width, 1)), seed + 1)
    # the zero-initialised D-Net head would make upstream gradients vanish
    theta = theta.with_flat(theta.flatten() + 0.1 * rng.standard_normal(theta.size))
    psi = psi.with_flat(psi.flatten() + 0.02 * rng.standard_normal(psi.size))
    return trip, theta, psi, hp


def _rel_err(a, f):
    floor = 1e-6 * max(np.max(np.abs(f)), 1e-300)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)


def _sites(theta, psi, y, x, t, hp):
    phi = nets.forward(theta, y).value
    nu = nets.forward(psi, y).value
    return negative_elbo_sites(y, x, t, phi, nu, hp)


def _central_diff(f, flat, step):
    """Central differences of a per-site vector function, summed after differencing."""
    out = np.empty_like(flat)
    for k in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[k] += step
        lo[k] -= step
        out[k] = math.fsum(f(hi) - f(lo)) / (2 * step)
    return out


def end_to_end_gradcheck(
    seeds=(0, 1, 2, 3, 4), size=8, width=2, hp: HyperParams = HyperParams(), step=1e-6
):
    """Compare autodiff weight gradients against central finite differences.

    Also checks :func:`variational.objective_grads` against finite
    differences taken directly on the network outputs.
    """
    per_seed = []
    for seed in seeds:
        trip, theta, psi, hp_s = _tiny_instance(seed, size, width, hp)
        y, x, t = trip.hazy, trip.clean, trip.trans
        g_theta, g_psi, _ = _element_grads(theta, psi, y, x, t, hp_s)

        fd_theta = _central_diff(lambda w: _sites(theta.with_flat(w), psi, y, x, t, hp_s), theta.flatten(), step)
        fd_psi = _central_diff(lambda w: _sites(theta, psi.with_flat(w), y, x, t, hp_s), psi.flatten(), step)

        phi = nets.dnet_forward(theta, y)
        nu = nets.tnet_forward(psi, y)
        a_phi, a_nu = objective_grads(y, x, t, phi, nu, hp_s)
        fd_phi = _central_diff(
            lambda p: negative_elbo_sites(y, x, t, p.reshape(phi.shape), nu, hp_s), phi.ravel(), step
        ).reshape(phi.shape)
        fd_nu = _central_diff(
            lambda n: negative_elbo_sites(y, x, t, phi, n.reshape(nu.shape), hp_s), nu.ravel(), step
        ).reshape(nu.shape)
        # saturated T-Net sites sit on the clamp boundary; FD there is one-sided
        interior = (nu > psi.spec.t_min) & (nu < 1.0)
        kink = np.abs(phi - x) < 1e-8
        per_seed.append(
            {
                "seed": int(seed),
                "theta_max_rel_err": float(_rel_err(g_theta, fd_theta).max()),
                "psi_max_rel_err": float(_rel_err(g_psi, fd_psi).max()),
                "phi_max_rel_err": float(_rel_err(a_phi, fd_phi)[~kink].max(initial=0.0)),
                "nu_max_rel_err": float(_rel_err(a_nu, fd_nu)[interior].max(initial=0.0)),
                "n_weights": int(theta.size + psi.size),
            }
        )
    worst = max(
        max(r["theta_max_rel_err"], r["psi_max_rel_err"], r["phi_max_rel_err"], r["nu_max_rel_err"])
        for r in per_seed
    )
    return {"max_rel_err": worst, "step": step, "size": size, "width": width, "seeds": per_seed}

