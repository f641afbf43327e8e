"""Toy convolutional posterior networks.

``dnet`` maps a hazy image to the clean-image estimate (a residual stack of
3x3 convolutions), ``tnet`` maps it to a clamped single-channel
transmission estimate.  Both are plain conv/relu stacks; the framework
does not depend on the architecture.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .imagecore import ImageError, as_image

__all__ = [
    "NetSpec",
    "NetworkWeights",
    "init_weights",
    "forward",
    "dnet_forward",
    "tnet_forward",
    "save_checkpoint",
    "load_checkpoint",
    "DNET_SPEC",
    "TNET_SPEC",
]

T_MIN = 0.05
TNET_BIAS_INIT = 0.5
CHECKPOINT_FORMAT = "hazebayes-weights/1"


@dataclass(frozen=True)
class NetSpec:
    kind: str  # "dnet" or "tnet"
    widths: tuple = (3, 16, 16, 3)
    t_min: float = T_MIN

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.kind not in ("dnet", "tnet"):
            raise ValueError(f"kind must be 'dnet' or 'tnet', got {self.kind!r}")
        if len(self.widths) < 2 or self.widths[0] != 3:
            raise ValueError("first layer must take 3 input channels")
        out = 3 if self.kind == "dnet" else 1
        if self.widths[-1] != out:
            raise ValueError(f"{self.kind} must end with {out} output channels")
        if not 0 < self.t_min < 1:
            raise ValueError("t_min must lie in (0, 1)")

    @property
    def n_layers(self):
        return len(self.widths) - 1

    def layer_names(self):
        return [f"conv{i}" for i in range(self.n_layers)]


DNET_SPEC = NetSpec("dnet", (3, 16, 16, 3))
TNET_SPEC = NetSpec("tnet", (3, 16, 16, 1))


@dataclass
class NetworkWeights:
    """Named kernels and biases with a fixed flattening order.

    The order is ``conv0.kernel, conv0.bias, conv1.kernel, ...`` with every
    array flattened in C order.
    """

    spec: NetSpec
    params: dict = field(default_factory=dict)

    def order(self):
        keys = []
        for name in self.spec.layer_names():
            keys += [f"{name}.kernel", f"{name}.bias"]
        return keys

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.order()])

    def with_flat(self, flat) -> "NetworkWeights":
        flat = np.asarray(flat, dtype=np.float64)
        params, pos = {}, 0
        for k in self.order():
            shape = self.params[k].shape
            n = int(np.prod(shape))
            params[k] = flat[pos : pos + n].reshape(shape).copy()
            pos += n
        if pos != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {pos}")
        return NetworkWeights(self.spec, params)

    @property
    def size(self):
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(self.spec, {k: v.copy() for k, v in self.params.items()})


def init_weights(spec: NetSpec, seed: int) -> NetworkWeights:
    """Kaiming-normal kernels (std ``sqrt(2 / fan_in)``), zero biases.

    The last D-Net layer is zeroed so an untrained D-Net is the identity.
    The last T-Net bias starts at 0.5 so outputs begin inside the clamp
    range instead of saturated.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for i, name in enumerate(spec.layer_names()):
        c_in, c_out = spec.widths[i], spec.widths[i + 1]
        fan_in = c_in * 9
        kernel = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, 3, 3))
        bias = np.zeros(c_out)
        last = i == spec.n_layers - 1
        if last and spec.kind == "dnet":
            kernel[:] = 0.0
        if last and spec.kind == "tnet":
            bias[:] = TNET_BIAS_INIT
        params[f"{name}.kernel"] = kernel
        params[f"{name}.bias"] = bias
    return NetworkWeights(spec, params)


def forward(w: NetworkWeights, y, leaves=None) -> ad.Tensor:
    """Build the forward graph of either network.

    ``leaves`` (optional dict) receives the parameter tensors so the caller
    can read their gradients after :func:`autodiff.backward`.
    """
    x = y if isinstance(y, ad.Tensor) else ad.Tensor(as_image(y, channels=3))
    if x.value.ndim != 3 or x.shape[2] != 3:
        raise ImageError(f"network input must be HxWx3, got {x.shape}")
    h = x
    n = w.spec.n_layers
    for i, name in enumerate(w.spec.layer_names()):
        k = ad.Tensor(w.params[f"{name}.kernel"])
        b = ad.Tensor(w.params[f"{name}.bias"])
        if leaves is not None:
            leaves[f"{name}.kernel"] = k
            leaves[f"{name}.bias"] = b
        h = ad.bias_add(ad.conv2d(h, k), b)
        if i < n - 1:
            h = ad.relu(h)
    if w.spec.kind == "dnet":
        return ad.add(x, h)
    return ad.clamp(h, w.spec.t_min, 1.0)


def _check_kind(w, kind):
    if w.spec.kind != kind:
        raise ValueError(f"expected {kind} weights, got {w.spec.kind}")


def dnet_forward(w: NetworkWeights, y) -> np.ndarray:
    _check_kind(w, "dnet")
    return forward(w, y).value


def tnet_forward(w: NetworkWeights, y) -> np.ndarray:
    _check_kind(w, "tnet")
    return forward(w, y).value


def save_checkpoint(w: NetworkWeights, path_stem, seed=None, step=0) -> None:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (little-endian float64)."""
    stem = Path(path_stem)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "spec": {**asdict(w.spec), "widths": list(w.spec.widths)},
        "seed": seed,
        "step": int(step),
        "order": [[k, list(w.params[k].shape)] for k in w.order()],
        "dtype": "<f8",
        "count": w.size,
    }
    stem.with_suffix(".bin").write_bytes(w.flatten().astype("<f8").tobytes())
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path_stem):
    """Inverse of :func:`save_checkpoint`; returns ``(weights, manifest)``."""
    stem = Path(path_stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{stem}: unknown checkpoint format {manifest.get('format')!r}")
    spec = NetSpec(**manifest["spec"])
    flat = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    if flat.size != manifest["count"]:
        raise ValueError(f"{stem}: payload has {flat.size} values, manifest says {manifest['count']}")
    params, pos = {}, 0
    for key, shape in manifest["order"]:
        n = int(np.prod(shape))
        params[key] = flat[pos : pos + n].astype(np.float64).reshape(shape)
        pos += n
    w = NetworkWeights(spec, params)
    if w.order() != [k for k, _ in manifest["order"]]:
        raise ValueError(f"{stem}: parameter order does not match spec")
    return w, manifest
