# %% [markdown]
# # Calderon pairs and multi-scale decompositions
#
# A Calderon pair `(theta, psi)` satisfies
# `sum_j psi_hat((A*)^j xi) theta_hat((A*)^j xi) = 1` away from the origin.
# Here both filters are built from a smooth partition of unity in the
# logarithm of the dual quasi-norm, and `psi = phi * phi`.

# %%
import numpy as np

from anisoprod.calderon import annulus_lower_bound_check, build_calderon_pair, moment_check
from anisoprod.dilation import make_dilation
from anisoprod.grid import Grid, GridFunction
from anisoprod.transforms import convolve, decompose, g_function

d = make_dilation(2.0)
grid = Grid.cube(1, 1024, 32.0)
pair = build_calderon_pair(d, 3, grid)
print("certified scales", pair.scales, " identity residual", pair.identity_residual)

# %% [markdown]
# The filter is at least 1/2 on a fundamental shell and vanishes far away.

# %%
b = pair.dual.b
print(annulus_lower_bound_check(pair.theta_hat, (1.0, b), pair.dual))

# %% [markdown]
# `phi * phi` reproduces `psi` in space.

# %%
phi, psi = pair.space_kernel("phi", 0), pair.space_kernel("psi", 0)
print("phi*phi - psi:", np.max(np.abs(convolve(phi, phi).samples - psi.samples)))

# %% [markdown]
# On a large box the moments of `psi` vanish to high order.

# %%
big = build_calderon_pair(d, 3, Grid.cube(1, 16384, 1024.0))
print("relative moments up to order 3:", moment_check(big.space_kernel("psi", 0), 3, relative=True))

# %% [markdown]
# Decompose a band-limited signal over the certified scales and form the
# Littlewood-Paley g-function.

# %%
x = grid.points()[..., 0]
f = GridFunction(grid, np.exp(-x ** 2 / 8) * np.cos(2 * x))
dec = decompose(f, pair, pair.scales, kind="psi")
print("scales", dec.indices())
g = g_function(f, pair, pair.scales)
print("||g f|| / ||f|| =", np.linalg.norm(g.samples) / np.linalg.norm(f.samples))
