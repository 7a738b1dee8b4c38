"""Normalized bumps and the multi-scale bump decomposition of a mean-zero field.

A mean-zero ``psi`` is split with the cutoffs ``theta(A^{-k} x)`` into
pieces ``D_k`` supported in ``B_k``; each piece is then corrected by
multiples of the normalized cutoffs ``tau_k`` so it has zero mean while the
sum is unchanged.  Rescaling ``D~_k`` by ``b^{kM}`` gives terms that are
uniformly normalized bumps on ``B_k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .calderon import transition
from .dilation import Dilation, ball_quadratic
from .errors import NotMeanZero, TailTooHeavy
from .grid import Grid, GridFunction, write_agf

# -- finite differences ------------------------------------------------------------

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0  # offsets -2..2, order 4


def _diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(a, dtype=float)
    for off, c in zip(range(-2, 3), _D1):
        if c:
            out += c * np.roll(a, -off, axis=axis)
    return out / h


def _partials(f: np.ndarray, h, order: int) -> dict:
    """All ``d^beta f`` with ``|beta| <= order`` by repeated order-4 centered
    differences (periodic wrap; fields are expected to vanish at the edge)."""
    n = f.ndim
    out = {(0,) * n: np.asarray(f, dtype=float)}
    frontier = dict(out)
    for _ in range(order):
        nxt = {}
        for beta, arr in frontier.items():
            for j in range(n):
                b2 = tuple(v + (i == j) for i, v in enumerate(beta))
                if b2 not in nxt and b2 not in out:
                    # differentiate along the last index raised, once per new beta
                    nxt[b2] = _diff(arr, j, h[j])
        out.update(nxt)
        frontier = nxt
    return out


def _chart_operators(M: np.ndarray, order: int) -> dict:
    """Express ``d_u^alpha [f(M u)]`` as ``sum_beta c_beta (d^beta f)(M u)``."""
    n = M.shape[0]
    result = {}

    def expand(seq):
        ops = {(0,) * n: 1.0}
        for i in seq:
            new = {}
            for beta, c in ops.items():
                for j in range(n):
                    if M[j, i] != 0:
                        b2 = tuple(v + (t == j) for t, v in enumerate(beta))
                        new[b2] = new.get(b2, 0.0) + c * M[j, i]
            ops = new
        return ops

    def multi(m):
        if n == 1:
            return [(m,)]
        out = []
        for first in range(m + 1):
            for rest in multi_rest(n - 1, m - first):
                out.append((first,) + rest)
        return out

    def multi_rest(k, m):
        if k == 1:
            return [(m,)]
        return [(a,) + r for a in range(m + 1) for r in multi_rest(k - 1, m - a)]

    for m in range(order + 1):
        for alpha in multi(m):
            seq = [i for i, a in enumerate(alpha) for _ in range(a)]
            result[alpha] = expand(seq)
    return result


@dataclass
class BumpReport:
    ok: bool
    worst_derivative: float
    worst_order: tuple
    support_violation: float
    per_order: dict = field(default_factory=dict)
    unstable: bool = False

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "worst_derivative": self.worst_derivative,
            "worst_order": list(self.worst_order),
            "support_violation": self.support_violation,
            "unstable": self.unstable,
            "per_order": {",".join(map(str, k)): v for k, v in self.per_order.items()},
        }


def chart_derivatives(samples: np.ndarray, h, M: np.ndarray, order: int) -> dict:
    """Sup norms of ``d_u^alpha [f(M u)]`` for ``|alpha| <= order``, computed
    from the samples of ``f`` on its own grid via the chain rule."""
    parts = _partials(samples, h, order)
    ops = _chart_operators(np.atleast_2d(M), order)
    sups = {}
    for alpha, combo in ops.items():
        acc = np.zeros_like(samples, dtype=float)
        for beta, c in combo.items():
            acc += c * parts[beta]
        sups[alpha] = float(np.max(np.abs(acc)))
    return sups


def is_normalized_bump(f: GridFunction, d: Dilation, N: int, k: int, support_tol: float = 1e-14,
                       tol: float = 1.0) -> BumpReport:
    """Check ``supp f`` in ``B_k`` and ``|d^alpha [f(A^k .)]| <= tol`` for ``|alpha| <= N``.

    Derivatives use order-4 centered differences at spacing ``h`` and again at
    ``2h``; a relative disagreement above 1% marks the report unstable.
    """
    grid = f.grid
    vals = np.real(f.samples)
    top = float(np.max(np.abs(vals))) if vals.size else 0.0
    outside = ball_quadratic(d, grid.points(), k) >= d.c
    violation = float(np.max(np.abs(vals[outside]))) if outside.any() else 0.0
    M = d.power(k)
    fine = chart_derivatives(vals, grid.h, M, N)
    coarse_slice = tuple(slice(None, None, 2) for _ in range(grid.dim))
    coarse = chart_derivatives(vals[coarse_slice], tuple(2 * x for x in grid.h), M, N)
    unstable = False
    for alpha, v in fine.items():
        # only derivatives that matter against the bound can destabilize the verdict
        big = max(v, coarse[alpha])
        if big > 1e-6 * tol and abs(v - coarse[alpha]) > 0.01 * big:
            unstable = True
    worst_order = max(fine, key=lambda a: fine[a])
    worst = fine[worst_order]
    ok = (violation <= support_tol * max(top, 1e-300)) and worst <= tol and not unstable
    return BumpReport(bool(ok), worst, worst_order, violation, fine, unstable)


# -- cutoff ---------------------------------------------------------------------------


def _ellipsoid_radius(d: Dilation, x) -> np.ndarray:
    """``sqrt(x^T P x / c)``: 1 on the boundary of ``B_0``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or (d.dim == 1 and x.shape[-1:] != (1,)):
        x = x[..., None]
    return np.sqrt(np.einsum("...i,ij,...j->...", x, d.P, x) / d.c)


def cutoff_profile(d: Dilation) -> Callable:
    """``theta``: 1 on the ellipsoid ``r^{-1} Delta`` (which contains ``B_{-1}``),
    0 outside ``B_0``, C-infinity in between (radial in the ellipsoid norm)."""
    inner = 1.0 / d.expansion_ratio

    def theta(x):
        r = _ellipsoid_radius(d, x)
        return 1.0 - transition((r - inner) / (1.0 - inner))

    return theta


def make_cutoff_theta(d: Dilation, N: int, grid: Optional[Grid] = None, points: int = 1024) -> GridFunction:
    """Sample the cutoff on ``grid`` (default: a box just containing ``B_0``).

    The transition width is fixed by the gap between ``B_{-1}`` and ``B_0``,
    so derivative bounds cannot all be pushed below 1; the measured bound up
    to order ``N`` is stored in ``meta["derivative_bound"]``.
    """
    if grid is None:
        half = np.sqrt(d.c * np.diag(np.linalg.inv(d.P)))
        grid = Grid((points,) * d.dim, tuple(1.25 * half))
    theta = cutoff_profile(d)
    gf = GridFunction.from_function(grid, theta)
    sups = chart_derivatives(gf.samples, grid.h, np.eye(d.dim), N)
    gf.meta.update({"cutoff": "ellipsoid", "N": N, "derivative_bound": max(sups.values())})
    return gf


# -- decomposition ---------------------------------------------------------------------


@dataclass
class BumpDecomposition:
    psi: GridFunction
    dilation: Dilation
    M: float
    N: int
    k_max: int
    c: float
    terms: List[GridFunction]
    theta: GridFunction
    D: List[np.ndarray]
    d: np.ndarray
    s: np.ndarray
    tau_norms: np.ndarray
    audit: list = field(default_factory=list)

    def reconstruction(self) -> np.ndarray:
        b = self.dilation.b
        acc = np.zeros(self.psi.grid.shape)
        for k, t in enumerate(self.terms):
            acc += b ** (-k * self.M) * t.samples
        return acc

    def reconstruction_error(self) -> float:
        return float(np.max(np.abs(self.reconstruction() - self.psi.samples)))

    def tail_bound(self) -> float:
        b = self.dilation.b
        return self.c * b ** (-(self.k_max + 1) * self.M) / (1.0 - b ** (-self.M))

    def d_decay_fit(self, floor: float = 1e-13):
        """Least-squares slope of ``log|d_k|`` against ``k`` over the terms
        whose ``|d_k|`` exceeds ``floor * ||psi||_1``; returns (slope, C)."""
        ref = self.psi.norm1()
        ks = np.array([k for k in range(len(self.d)) if abs(self.d[k]) > floor * ref])
        if len(ks) < 2:
            return float("-inf"), 0.0
        slope, icpt = np.polyfit(ks, np.log(np.abs(self.d[ks])), 1)
        return float(slope), float(np.exp(icpt))

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_agf(out / "psi.agf", self.psi)
        write_agf(out / "theta.agf", self.theta)
        for k, t in enumerate(self.terms):
            write_agf(out / f"term_{k:03d}.agf", t)
        manifest = {"M": self.M, "N": self.N, "c": self.c, "k_max": self.k_max, "audit": self.audit}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def decompose_bump(psi: GridFunction, d: Dilation, M: float, N: int, k_max: int,
                   mean_tol: float = 1e-10, tail_tol: float = 1e-12) -> BumpDecomposition:
    """Split a mean-zero ``psi`` into ``sum_k b^{-kM} psi^{(k)}``, ``k = 0..k_max``.

    ``D_0 = psi theta``, ``D_k = psi [theta(A^{-k} x) - theta(A^{-(k-1)} x)]``,
    ``d_k = int D_k``.  With ``tau_k`` the cutoff ``theta(A^{-k} x)`` normalized
    to unit grid integral and ``s_k = -sum_{j >= k} d_j`` (``s_0 = 0``), each
    ``D~_k = D_k - d_k tau_k + s_k (tau_{k-1} - tau_k)`` has zero grid mean and
    the ``D~_k`` sum to ``psi theta(A^{-k_max} x)`` up to ``(int psi) tau_0``.
    The tail sums equal the head sums ``sum_{j<k} d_j`` because the total is
    zero; they are used because they carry no accumulated rounding.
    """
    grid = psi.grid
    vals = np.real(psi.samples).astype(float)
    n1 = psi.norm1()
    if n1 == 0:
        raise NotMeanZero("psi is identically zero")
    mean = float(np.sum(vals) * grid.cell_volume)
    if abs(mean) > mean_tol * n1:
        raise NotMeanZero(f"|int psi| = {abs(mean):.3e} exceeds {mean_tol:.0e} * ||psi||_1")
    pts = grid.points()
    outside = ball_quadratic(d, pts, k_max - 1) >= d.c
    tail = float(np.sum(np.abs(vals[outside])) * grid.cell_volume)
    if tail > tail_tol * n1:
        raise TailTooHeavy(f"mass {tail:.3e} of psi lies outside B_{k_max - 1}")

    theta = cutoff_profile(d)
    b = d.b
    cut = []
    for k in range(k_max + 1):
        y = pts @ d.power(-k).T
        cut.append(theta(y))
    tau_norms = np.array([np.sum(t) * grid.cell_volume for t in cut])
    tau = [t / nrm for t, nrm in zip(cut, tau_norms)]

    D = [vals * cut[0]] + [vals * (cut[k] - cut[k - 1]) for k in range(1, k_max + 1)]
    dk = np.array([np.sum(x) * grid.cell_volume for x in D])
    s = np.zeros(k_max + 1)
    for k in range(k_max, 0, -1):
        s[k] = (s[k + 1] if k < k_max else 0.0) - dk[k]

    terms, audit = [], []
    for k in range(k_max + 1):
        Dt = D[k] - dk[k] * tau[k]
        if k >= 1:
            Dt = Dt + s[k] * (tau[k - 1] - tau[k])
        term = GridFunction(grid, b ** (k * M) * Dt, "space", {"term": k})
        terms.append(term)

    # the rescaled terms are measured as bumps on their own scale; c is the
    # largest measured derivative norm so every c^{-1} psi^{(k)} is normalized
    norms = []
    for k, t in enumerate(terms):
        sups = chart_derivatives(t.samples, grid.h, d.power(k), N)
        norms.append(max(sups.values()))
        mass = float(np.sum(t.samples) * grid.cell_volume)
        audit.append({"k": k, "d_k": float(dk[k]), "s_k": float(s[k]), "bump_norm": norms[-1],
                      "mean": mass, "norm1": t.norm1()})
    c = max(norms) if max(norms) > 0 else 1.0
    theta_gf = GridFunction(grid, cut[0], "space", {"cutoff": "ellipsoid"})
    return BumpDecomposition(psi, d, float(M), int(N), int(k_max), float(c), terms, theta_gf, D, dk, s,
                             tau_norms, audit)


def gaussian_difference(grid: Grid, s1: float = 0.25, s2: float = 0.5) -> GridFunction:
    """``g_{s1} - g_{s2}`` with ``g_s`` the unit-mass Gaussian of width ``s``;
    mean zero and rapidly decaying."""
    r2 = np.sum(grid.points() ** 2, -1)
    n = grid.dim

    def g(s):
        return np.exp(-r2 / (2 * s * s)) / (2 * np.pi * s * s) ** (n / 2)

    return GridFunction(grid, g(s1) - g(s2), "space", {"psi": f"gaussdiff:s1={s1},s2={s2}"})
