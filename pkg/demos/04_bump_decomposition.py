# %% [markdown]
# # Splitting a mean-zero function into normalized bumps
#
# A rapidly decaying mean-zero `psi` is written as `sum_k b^{-kM} psi^(k)`,
# where each `psi^(k)` is supported in `B_k`, has mean zero, and (after
# one global constant) is an `N`-normalized bump on its own scale.

# %%
import numpy as np

from anisoprod.bump import decompose_bump, gaussian_difference, is_normalized_bump
from anisoprod.dilation import make_dilation
from anisoprod.grid import Grid

d = make_dilation(2.0)
grid = Grid.cube(1, 131072, 64.0)
psi = gaussian_difference(grid)
dec = decompose_bump(psi, d, M=4, N=3, k_max=20)

# %% [markdown]
# The sum reproduces `psi` to rounding.

# %%
print("relative error", dec.reconstruction_error() / psi.sup(), " constant c =", dec.c)

# %% [markdown]
# Every term: support, mean and derivative bounds in the chart of its scale.

# %%
for k in range(6):
    t = dec.terms[k]
    rep = is_normalized_bump(t.like(t.samples / dec.c), d, 3, k, tol=1 + 1e-9)
    print(k, rep.ok, f"worst derivative {rep.worst_derivative:.3f}", f"mean {t.integral():.1e}")

# %% [markdown]
# The shell masses `d_k` decay geometrically, faster than `b^{-kM}`.

# %%
slope, _ = dec.d_decay_fit()
print("fitted slope", slope, " reference -M log b =", -4 * np.log(2))
