# %% [markdown]
# # Volatility forecasts from one observation
#
# `conditional_variance` gives Var(Y_{t+j} | y_t).  Large shocks raise the
# forecast and calm observations lower it below the unconditional
# Student-t variance.  The effect fades with the horizon as rho**j shrinks.

# %%
import numpy as np

from nsvt.model import NsvtParams, conditional_variance

params = NsvtParams([0.0], sigma2=1.0, nu=5.0, rho=0.7)
grid = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
print("unconditional:", params.sigma2 * params.nu / (params.nu - 2))
for j in (1, 2, 5, 20):
    print(f"horizon {j:2d}:", np.round(conditional_variance(grid, 0.0, params, j), 3))

# %% [markdown]
# A Monte Carlo check at horizon 1: bin simulated pairs on y_t and compare
# the bin variance of y_{t+1} with the bin mean of the formula.

# %%
from nsvt.gar import sample_pair

z_next, z_now = sample_pair(params.latent, seed=1, size=500_000)
rng = np.random.default_rng(2)
y_now = rng.standard_normal(z_now.size) / np.sqrt(z_now)
y_next = rng.standard_normal(z_next.size) / np.sqrt(z_next)
edges = np.quantile(y_now, [0, 0.2, 0.4, 0.6, 0.8, 1.0])
for lo, hi in zip(edges[:-1], edges[1:]):
    sel = (y_now >= lo) & (y_now <= hi)
    mc = np.mean(y_next[sel] ** 2)
    formula = np.mean(conditional_variance(y_now[sel], 0.0, params))
    print(f"[{lo:7.2f}, {hi:6.2f}]  mc {mc:.3f}  formula {formula:.3f}")
