"""Frequency-side Calderon pairs for an expansive dilation.

Everything is driven by the continuous log quasi-norm ``u(xi)`` of the
transposed dilation, which increases by exactly one under ``xi -> A* xi``.
A profile ``g`` of ``u`` that equals 1 on ``[0, 1]`` and vanishes outside
``(-1, 2)`` gives the shell bump ``eta^ = g(u)``; dividing by the periodic
energy ``E(u) = sum_j g(u + j)^2`` turns it into an exact partition of unity
over dilates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .dilation import Dilation, log_quasi_norm, quasi_norm
from .errors import EmptyShell, ResidualExceedsTol, ResolutionTooCoarse
from .grid import Grid, GridFunction, inverse_fourier

VARIANTS = ("symmetric", "unbalanced")


def transition(t):
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1), built from exp(-1/t)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        s = 1.0 - t
        g = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return f / (f + g)


def shell_profile(u):
    """1 on [0, 1], rising on [-1, 0], falling on [1, 2], 0 elsewhere."""
    u = np.asarray(u, dtype=float)
    up = transition(u + 1.0)
    down = 1.0 - transition(u - 1.0)
    return np.where(u < 0, up, np.where(u <= 1, 1.0, down))


def profile_energy(u):
    """``E(u) = sum_j g(u + j)^2``; 1-periodic with ``1 <= E <= 2``."""
    frac = np.mod(np.asarray(u, dtype=float), 1.0)
    return sum(shell_profile(frac + j) ** 2 for j in range(-2, 3))


def _pad_u(u):
    # the origin (u = -inf) lies outside every shell
    return np.where(np.isfinite(u), u, -1e6)


@dataclass
class CalderonPair:
    dilation: Dilation
    s: int
    grid: Grid
    psi_hat: GridFunction
    theta_hat: GridFunction
    phi_hat: GridFunction
    annulus: tuple
    scales: tuple
    identity_residual: float
    variant: str = "symmetric"
    moment_residual: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @cached_property
    def dual(self) -> Dilation:
        return self.dilation.transpose()

    # analytic evaluators on arbitrary frequency points (..., n)
    def u(self, xi) -> np.ndarray:
        return _pad_u(log_quasi_norm(self.dual, xi))

    def psi_hat_at(self, xi):
        return _psi_of_u(self.u(xi), self.variant)

    def theta_hat_at(self, xi):
        return _theta_of_u(self.u(xi), self.variant)

    def phi_hat_at(self, xi):
        return np.sqrt(self.psi_hat_at(xi))

    def evaluator(self, kind: str) -> Callable:
        return {"psi": self.psi_hat_at, "theta": self.theta_hat_at, "phi": self.phi_hat_at}[kind]

    def filter(self, kind: str, k: int, grid: Optional[Grid] = None) -> np.ndarray:
        """Samples of ``kind^((A*)^k xi)`` on the frequency grid, the transform
        of the dilate ``b^{-k} f(A^{-k} x)``."""
        grid = grid or self.grid
        xi = grid.freq_points()
        if k == 0:
            return self.evaluator(kind)(xi)
        u = self.u(xi) + k
        if kind == "psi":
            return _psi_of_u(u, self.variant)
        if kind == "theta":
            return _theta_of_u(u, self.variant)
        return np.sqrt(_psi_of_u(u, self.variant))

    def space_kernel(self, kind: str, k: int = 0) -> GridFunction:
        F = GridFunction(self.grid, self.filter(kind, k), "frequency")
        out = inverse_fourier(F, real=True)
        out.meta.update({"kernel": kind, "scale": k})
        return out

    def certified(self, k: int) -> bool:
        return self.scales[0] <= k <= self.scales[1]


def _psi_of_u(u, variant):
    g = shell_profile(u)
    E = profile_energy(u)
    return g / np.sqrt(E) if variant == "symmetric" else g / E


def _theta_of_u(u, variant):
    g = shell_profile(u)
    return g / np.sqrt(profile_energy(u)) if variant == "symmetric" else g


def _directions(n: int, count: int = 256) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = np.linspace(0, np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], -1)
    i = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    th = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], -1)


def _radius(dual: Dilation, m: int, dirs: np.ndarray) -> np.ndarray:
    """Radius of the dual ball ``B*_m`` along each unit direction."""
    M = dual.power(-m)
    Q = M.T @ dual.P @ M
    return np.sqrt(dual.c / np.einsum("ni,ij,nj->n", dirs, Q, dirs))


def certified_scales(d: Dilation, grid: Grid, min_cells: int = 16, search: int = 60) -> tuple:
    """Scales ``k`` whose filter support ``B*_{2-k} minus B*_{-1-k}`` lies in
    the frequency box and is at least ``min_cells`` frequency cells thick
    along every direction."""
    dual = d.transpose()
    dirs = _directions(d.dim)
    nyq = np.array([0.5 / h for h in grid.h])
    cell = min(1.0 / (2 * L) for L in grid.L)
    good = []
    for k in range(-search, search + 1):
        outer = _radius(dual, 2 - k, dirs)
        inner = _radius(dual, -1 - k, dirs)
        pts = outer[:, None] * dirs
        inside = np.all(np.abs(pts) < nyq) and _ellipsoid_in_box(dual, 2 - k, nyq)
        if inside and np.min(outer - inner) >= min_cells * cell:
            good.append(k)
    if not good:
        raise ResolutionTooCoarse("no filter scale is both inside the frequency box and resolved")
    return (min(good), max(good))


def _ellipsoid_in_box(dual: Dilation, m: int, nyq: np.ndarray) -> bool:
    M = dual.power(-m)
    Q = M.T @ dual.P @ M
    half = np.sqrt(dual.c * np.diag(np.linalg.inv(Q)))
    return bool(np.all(half < nyq))


def identity_residual(pair: CalderonPair, scales: Optional[tuple] = None):
    """``sup |sum_k psi^((A*)^k xi) theta^((A*)^k xi) - 1|`` over certified grid
    frequencies, evaluated by direct summation at the dilated points.

    Returns ``(residual, worst_xi)``.
    """
    d = pair.dilation
    k_lo, k_hi = scales or pair.scales
    xi = pair.grid.freq_points().reshape(-1, d.dim)
    u = pair.u(xi)
    mask = (u >= 1 - k_hi) & (u <= -k_lo)
    if not mask.any():
        raise EmptyShell("no grid frequency lies in the certified annulus")
    pts = xi[mask]
    total = np.zeros(len(pts))
    At = d.matrix.T
    for k in range(k_lo, k_hi + 1):
        y = pts @ np.linalg.matrix_power(At, k).T if k >= 0 else pts @ np.linalg.matrix_power(np.linalg.inv(At), -k).T
        total += pair.psi_hat_at(y) * pair.theta_hat_at(y)
    err = np.abs(total - 1.0)
    i = int(np.argmax(err))
    return float(err[i]), pts[i]


def build_calderon_pair(d: Dilation, s: int, grid: Grid, tol: float = 1e-8, variant: str = "symmetric",
                        min_cells: int = 16) -> CalderonPair:
    """Calderon pair on ``grid``'s frequency box.

    ``variant="symmetric"`` sets ``theta^ = psi^ = g/sqrt(E)``;
    ``"unbalanced"`` sets ``theta^ = g`` and ``psi^ = g/E``.  Either way
    ``phi^ = sqrt(psi^)``.  ``s`` is the moment order recorded and checked
    (the filters vanish near the origin, so every moment of ``psi`` vanishes).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if grid.staggered:
        raise ResolutionTooCoarse("Calderon filters need an unstaggered grid")
    scales = certified_scales(d, grid, min_cells)
    dual = d.transpose()
    xi = grid.freq_points()
    u = _pad_u(log_quasi_norm(dual, xi))
    psi = _psi_of_u(u, variant)
    theta = _theta_of_u(u, variant)
    phi = np.sqrt(psi)
    meta = {"dilation": d.matrix.tolist(), "dual": "A*"}
    pair = CalderonPair(
        dilation=d,
        s=int(s),
        grid=grid,
        psi_hat=GridFunction(grid, psi, "frequency", dict(meta, kernel="psi")),
        theta_hat=GridFunction(grid, theta, "frequency", dict(meta, kernel="theta")),
        phi_hat=GridFunction(grid, phi, "frequency", dict(meta, kernel="phi")),
        annulus=(1 - scales[1], -scales[0] - 1),
        scales=scales,
        identity_residual=np.nan,
        variant=variant,
    )
    pair.psi_hat.evaluator = pair.psi_hat_at
    pair.theta_hat.evaluator = pair.theta_hat_at
    pair.phi_hat.evaluator = pair.phi_hat_at
    if np.max(np.abs(phi * phi - psi)) > 1e-12:
        raise ResidualExceedsTol("phi^2 differs from psi", None)
    res, worst = identity_residual(pair)
    pair.identity_residual = res
    if res > tol:
        raise ResidualExceedsTol(f"Calderon identity residual {res:.3e} exceeds {tol:.1e}", worst)
    return pair


# -- checks -------------------------------------------------------------------


def _multi_indices(n: int, s: int):
    if n == 1:
        return [(a,) for a in range(s + 1)]
    out = []
    for first in range(s + 1):
        out.extend((first,) + rest for rest in _multi_indices(n - 1, s - first))
    return out


def moment_check(f: GridFunction, s: int, relative: bool = False) -> float:
    """Largest ``|int x^gamma f dx|`` over ``|gamma| <= s`` by grid quadrature
    (divided by ``||f||_1`` when ``relative``)."""
    if f.domain != "space":
        raise ValueError("moment_check needs a space-domain field")
    axes = f.grid.axes()
    vals = np.real_if_close(f.samples)
    worst = 0.0
    for gamma in _multi_indices(f.dim, s):
        mono = np.ones(f.grid.shape)
        for i, g in enumerate(gamma):
            if g:
                shape = [1] * f.dim
                shape[i] = -1
                mono = mono * axes[i].reshape(shape) ** g
        worst = max(worst, abs(np.sum(mono * vals)) * f.grid.cell_volume)
    if relative:
        n1 = f.norm1()
        return worst / n1 if n1 > 0 else 0.0
    return float(worst)


def annulus_lower_bound_check(theta_hat: GridFunction, shell, dual: Dilation) -> float:
    """Minimum of ``|theta^|`` over grid frequencies with ``lo <= rho*(xi) < hi``
    (``rho*`` the step quasi-norm of ``dual``)."""
    lo, hi = shell
    r = quasi_norm(dual, theta_hat.grid.freq_points())
    mask = (r >= lo) & (r < hi)
    if not mask.any():
        raise EmptyShell(f"no grid frequency has rho* in [{lo}, {hi})")
    return float(np.min(np.abs(theta_hat.samples[mask])))
