# %% [markdown]
# # Reverse-mode gradients and the two toy networks

# %%
import numpy as np

from hazebayes import autodiff as ad
from hazebayes import nets

a = ad.Tensor(np.array([0.5, 1.0, 2.0]))
loss = ad.sum(ad.add(ad.mul(a, a), ad.log(a)))
ad.backward(loss)
print("d/da (a^2 + log a) =", a.grad, "expected", 2 * a.value + 1 / a.value)

# %%
rng = np.random.default_rng(0)
y = rng.uniform(size=(32, 48, 3))
theta = nets.init_weights(nets.DNET_SPEC, seed=0)
psi = nets.init_weights(nets.TNET_SPEC, seed=1)
print("untrained D-Net is the identity:", np.array_equal(nets.dnet_forward(theta, y), y))
nu = nets.tnet_forward(psi, y)
print("T-Net output", nu.shape, "range", nu.min().round(3), nu.max().round(3))
print("weights: D-Net", theta.size, " T-Net", psi.size)

# %%
# weight gradients come from the same graph machinery
leaves = {}
ad.backward(ad.mean(nets.forward(psi, y, leaves)))
print({k: float(np.abs(v.grad).max()) for k, v in leaves.items()})

# %%
import tempfile
from pathlib import Path

stem = Path(tempfile.mkdtemp()) / "tnet"
nets.save_checkpoint(psi, stem, seed=1)
psi2, manifest = nets.load_checkpoint(stem)
print(manifest["format"], manifest["count"], "values; identical output:",
      nets.tnet_forward(psi2, y).tobytes() == nu.tobytes())
