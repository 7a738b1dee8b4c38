# %% [markdown]
# # Sampled Muckenhoupt constants
#
# The estimator takes the maximum of `avg(w) * avg(w^{-1/(p-1)})^{p-1}` over
# sampled balls `x + B_k`.  A finite maximum over finitely many balls is only a
# lower bound, so membership is judged by stability: does the estimate settle
# when the scale window grows?
#
# For the power weight `rho^alpha` on the dyadic line the answer is known:
# it is in `A_p` exactly when `-1 < alpha < p - 1`.

# %%
import numpy as np

from anisoprod.dilation import make_dilation
from anisoprod.grid import Grid
from anisoprod.weights import (ap_constant_estimate, constant_weight, critical_index_estimate, is_stable,
                               power_weight, product_ap_estimate, product_power_weight)

d = make_dilation(2.0)
grid = Grid((2 ** 15,), (256.0,), staggered=True)

# %% [markdown]
# The constant weight gives exactly 1 for every `p`.

# %%
for p in (1.0, 2.0, 4.0):
    print(p, ap_constant_estimate(constant_weight(grid, d), p, (-4, 4)).value)

# %% [markdown]
# Scan `alpha` for `p = 2`.  The weight carries exact cell averages of its
# powers, so a non-integrable `w^{-1/(p-1)}` shows up as an infinite average
# instead of slow growth under refinement.

# %%
for alpha in np.round(np.arange(0.5, 1.21, 0.1), 2):
    w = power_weight(d, grid, alpha)
    small = ap_constant_estimate(w, 2.0, (-4, 4))
    large = ap_constant_estimate(w, 2.0, (-8, 8))
    print(f"alpha={alpha:4.1f}  estimate={large.value:10.3f}  stable={is_stable(small.trend, large.trend)}")

# %% [markdown]
# The critical index `q_w` is bracketed by the smallest stable `p` on a grid
# of exponents; for `alpha = 0.5` it is `1.5`.

# %%
est = critical_index_estimate(power_weight(d, grid, 0.5), [1.2, 1.4, 1.6, 1.8, 2.0])
print(est.value, est.flag)

# %% [markdown]
# Product weights are tested slice by slice: freeze one variable, estimate
# the one-parameter constant in the other.

# %%
g2 = Grid.cube(2, 512, 32.0, staggered=True)
w2 = product_power_weight(d, d, g2, 0.3, 0.5)
print(product_ap_estimate(w2, 2.0, (-2, 2), 16, slices=4).value)
