# %% [markdown]
# # Metrics and image files

# %%
import tempfile
from pathlib import Path

import numpy as np

from hazebayes import metrics
from hazebayes.imagecore import load_image, load_pfm, save_image, save_pfm

rng = np.random.default_rng(0)
a = rng.uniform(size=(40, 40, 3))
b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
print("mse", round(metrics.mse(a, b), 5), "psnr", round(metrics.psnr(a, b), 2), "ssim", round(metrics.ssim(a, b), 4))
print("identical:", metrics.psnr(a, a), metrics.ssim(a, a))

# %%
d = Path(tempfile.mkdtemp())
save_pfm(a, d / "a.pfm")
save_image(a, d / "a.png")
print("PFM max err", np.abs(load_pfm(d / "a.pfm") - a).max())   # float32
print("PNG max err", np.abs(load_image(d / "a.png") - a).max())  # 8-bit
