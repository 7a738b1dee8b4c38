# %% [markdown]
# # Expansive dilations and their quasi-norms
#
# An expansive matrix `A` (every eigenvalue outside the unit circle) defines
# a nested family of ellipsoids `B_k = A^k B_0`, each of volume `b^k` with
# `b = |det A|`.  The step quasi-norm takes the value `b^k` on the shell
# `B_{k+1} \ B_k`.  This notebook builds a few dilations and checks the basic
# calculus numerically.

# %%
import numpy as np

from anisoprod.dilation import (ball_membership, check_ball_sum_law, continuous_quasi_norm, dilation_to_json,
                                make_dilation, quasi_norm)

# %% [markdown]
# The dyadic line.  `B_0` is the interval of length one centred at 0, so the
# shell `B_1 \ B_0` is `1/2 <= |x| < 1`, where the quasi-norm equals 1.

# %%
line = make_dilation(2.0)
print("b =", line.b, " sigma =", line.sigma)
for x in (0.3, 0.5, 0.99, 3.0):
    print(f"rho({x}) = {quasi_norm(line, x)}")

# %% [markdown]
# A non-diagonal example.  The JSON summary lists the ellipsoid `P`, the
# constant `c` fixing unit volume, the integer `sigma` with `2 B_0` inside
# `A^sigma B_0`, and the eigenvalue bounds.

# %%
A = np.array([[2.0, 1.0], [0.0, 3.0]])
d = make_dilation(A)
print(dilation_to_json(d))

# %% [markdown]
# Homogeneity: moving a point by `A` moves it out exactly one shell.

# %%
rng = np.random.default_rng(0)
x = rng.standard_normal((5, 2)) * 10.0 ** rng.uniform(-2, 2, (5, 1))
print(np.c_[quasi_norm(d, x), quasi_norm(d, x @ A.T) / d.b])

# %% [markdown]
# The quasi-triangle inequality holds with `H = b^sigma`; the worst sampled
# ratio stays below it.

# %%
x = rng.standard_normal((20000, 2)) * 10.0 ** rng.uniform(-2, 2, (20000, 1))
y = rng.standard_normal((20000, 2)) * 10.0 ** rng.uniform(-2, 2, (20000, 1))
ratio = quasi_norm(d, x + y) / (quasi_norm(d, x) + quasi_norm(d, y))
print("worst ratio", ratio.max(), "bound H =", d.b ** d.sigma)

# %% [markdown]
# Ball sum laws: `B_k + B_l` sits inside `B_{max(k,l)+sigma}`, and a point of
# `B_k` plus a point outside `B_{k+sigma}` lands outside `B_k`.

# %%
print(all(check_ball_sum_law(d, k, l, 500, rng) for k in range(-2, 3) for l in range(-2, 3)))
print("0.4 in B_0:", ball_membership(line, 0.4, 0), " 0.6 in B_0:", ball_membership(line, 0.6, 0))

# %% [markdown]
# The continuous quasi-norm interpolates between shells; on the dyadic line
# it is `|x|` divided by the half-width of `B_0`.

# %%
print(continuous_quasi_norm(line, np.array([0.25, 0.5, 1.0])))
