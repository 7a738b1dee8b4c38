# %% [markdown]
# # Dyadic cubes and rectangular atoms
#
# For a dilation conjugate to a diagonal integer matrix the dyadic cubes are
# lattice boxes; each cube sits between two dilated balls about its centre.
# A rectangular atom lives on an enlarged product of two cubes, has
# vanishing slice moments and a prescribed weighted L^q norm.

# %%
import numpy as np

from anisoprod import atoms as at
from anisoprod.config import default_config
from anisoprod.dilation import make_dilation
from anisoprod.experiments import run_t12_decay
from anisoprod.grid import Grid, GridFunction

d = make_dilation(np.diag([2.0, 4.0]))
cubes = at.christ_cubes(d)
print("v =", cubes.v, " u =", cubes.u)
sample = [c for k in range(-2, 3) for c in cubes.cubes_near(k, np.full(2, 0.3), 3)]
print(at.sandwich_check(cubes, sample, samples=500))

# %% [markdown]
# An atom on the dyadic line squared, built from noise.

# %%
line = make_dilation(2.0)
lc = at.christ_cubes(line)
rect = at.Rect(lc.cube(1, [0]), lc.cube(1, [-1]))
grid = Grid((128, 128), (16.0, 16.0))
f = GridFunction(grid, np.random.default_rng(0).standard_normal(grid.shape))
atom = at.make_rectangular_atom(f, rect, (1.0, 2.0, (1, 2)))
print(atom.certificate.to_dict())

# %% [markdown]
# The L^p mass of the Hilbert image of an atom outside growing enlargements
# of its rectangle decays geometrically in the enlargement index.

# %%
res = run_t12_decay(default_config("t12_decay", N=(512,), L=32.0, gamma_max=1, window=(-10, 10), cube_level=3))
print([(r["gamma"], r["mass"]) for r in res.rows if r["gamma"] != "fit"])
