# %% [markdown]
# # Dark channel prior baseline
# Airlight from the brightest dark-channel pixels, then the classic inversion.

# %%
import numpy as np

from hazebayes import datagen, dcp, hazemodel, metrics

x = datagen.gen_clean(96, 96, seed=3)
t = np.full((96, 96, 1), 0.6)
t[:20, :20] = 1e-4  # an opaque patch, e.g. sky
y = hazemodel.synthesize_hazy(x, t, A=0.83)

# %%
cfg = dcp.DcpConfig()  # window 15, omega 0.95, t0 0.1
dark = dcp.dark_channel(y, cfg.window)
print("dark channel max", dark.max().round(4))
print("A estimate", round(dcp.estimate_atmospheric_light(y, cfg), 4), "(true 0.83)")

# %%
x_hat, t_hat, A_hat = dcp.dcp_dehaze(y, cfg)
print("PSNR hazy  ", round(metrics.psnr(y, x), 2))
print("PSNR DCP   ", round(metrics.psnr(x_hat, x), 2))
print("median t_hat outside the patch", np.median(t_hat[30:, 30:]).round(3), "(true 0.6)")
