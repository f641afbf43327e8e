# %% [markdown]
# # The three objective terms
# Likelihood of the hazy image under the scattering model, plus two KL terms
# pulling the posteriors toward the clean image and the true transmission.

# %%
import numpy as np

from hazebayes import HyperParams, negative_elbo, objective_grads
from hazebayes.datagen import synthetic_dataset
from hazebayes.variational import kl_quadrature_oracle

trip = synthetic_dataset(1, size=16, seed=0)[0]
y, x, t = trip.hazy, trip.clean, trip.trans
hp = HyperParams(A=trip.A)  # sigma2 1e-5, eps1_2 1e-6, eps2_2 1e-5

# %%
# at the consistent optimum both KLs vanish; the likelihood is a constant per site
br = negative_elbo(y, x, t, x, t, hp)
print(br.as_dict())
print("per site:", br.likelihood / y.size)

# %%
# move phi a little: the Laplace KL dominates because eps1_2 is tiny
rng = np.random.default_rng(0)
phi = x + rng.normal(0, 1e-3, x.shape)
nu = np.clip(t * np.exp(rng.normal(0, 3e-3, t.shape)), 1e-3, 1)
br = negative_elbo(y, x, t, phi, nu, hp)
for k, v in br.as_dict().items():
    print(f"{k:>14} {v: .4e}")

# %%
g_phi, g_nu = objective_grads(y, x, t, phi, nu, hp)
print("|grad phi| max", np.abs(g_phi).max(), " |grad nu| max", np.abs(g_nu).max())

# %%
# the closed forms against brute-force integration of the densities
b = 1e-3
print("Laplace, offset = b :", kl_quadrature_oracle("laplace", 0.2, 0.2 + b, b), "vs", np.exp(-1))
print("Lognormal, offset = s:", kl_quadrature_oracle("lognormal", -0.5, -0.5 + np.sqrt(1e-4), 1e-4), "vs 0.5")
