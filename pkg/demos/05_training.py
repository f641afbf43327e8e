# %% [markdown]
# # Joint training at toy scale
# Both networks are updated from the one shared negative ELBO.
# The full trend check uses 2000 steps; this runs a short version.

# %%
import numpy as np

from hazebayes import nets, trainer
from hazebayes.datagen import synthetic_dataset

train_set = synthetic_dataset(16, size=48, seed=0)
held_out = synthetic_dataset(4, size=48, seed=10_000)
cfg = trainer.TrainConfig(steps=150, batch_size=4, patch_size=48, seed=0)

seeds = np.random.default_rng(cfg.seed).integers(0, 2**31, 2)
theta0 = nets.init_weights(cfg.dnet_spec(), int(seeds[0]))
psi0 = nets.init_weights(cfg.tnet_spec(), int(seeds[1]))

# %%
theta, psi, log = trainer.train(
    train_set, cfg, theta0, psi0,
    on_step=lambda r: r.step % 50 == 0 and print(r.step, f"{r.negative_elbo:.3e}"),
)
ne = np.array([r.negative_elbo for r in log])
print("first/last 50-step mean:", ne[:50].mean(), ne[-50:].mean())

# %%
before = trainer.evaluate(theta0, psi0, held_out)["mean"]
after = trainer.evaluate(theta, psi, held_out)["mean"]
for k in ("psnr", "ssim", "trans_mse"):
    print(f"{k:>10} {before[k]:.4f} -> {after[k]:.4f}")

# %%
# dehazing needs only the D-Net
print("D-Net-only psnr:", trainer.evaluate(theta, None, held_out)["mean"]["psnr"])

# %%
# gradients through both networks vs finite differences
rep = trainer.end_to_end_gradcheck(seeds=(0, 1))
print("gradcheck max rel err", rep["max_rel_err"])
