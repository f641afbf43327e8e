# %% [markdown]
# # Synthesising haze
# Clean image + depth + (A, beta) -> hazy image and transmission.

# %%
import numpy as np

from hazebayes import datagen, hazemodel, metrics

clean = datagen.gen_clean(64, 64, seed=0)
depth = datagen.gen_depth(64, 64, "linear-ramp", seed=0)
t = hazemodel.transmission_from_depth(depth, beta=1.2)
hazy = hazemodel.synthesize_hazy(clean, t, A=0.9)
print("depth range", depth.min().round(3), depth.max().round(3))
print("t range", t.min().round(3), t.max().round(3))

# %%
# far columns wash out toward A
print("mean |y - A| near / far:", np.abs(hazy[:, :4] - 0.9).mean().round(4), np.abs(hazy[:, -4:] - 0.9).mean().round(4))
print("PSNR(hazy, clean) =", round(metrics.psnr(hazy, clean), 2), "dB")

# %%
# the pair (y, x) pins down t wherever x is not too close to A
ok = np.all(np.abs(clean - 0.9) > 0.05, axis=2)
log_t = hazemodel.log_transmission_from_pair(hazy[ok][:, None], clean[ok][:, None], 0.9)
print("max |exp(log t) - t| on safe pixels:", np.abs(np.exp(log_t) - t[ok][:, None]).max())

# %%
# a whole dataset on disk: PFM for training, PNG for looking at
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp())
manifest = datagen.gen_triplets([clean], out, n_per_image=3, seed=1)
for rec in manifest["records"]:
    print(rec["hazy"], "A=%.3f beta=%.3f" % (rec["A"], rec["beta"]), rec["depth_kind"])
