"""Dyadic cubes for diagonal-conjugate dilations and rectangular atoms.

For ``A = S D S^{-1}`` with ``D`` diagonal and integer entries ``m_i >= 2``
the level-``k`` cubes are ``S`` applied to the boxes
``prod_i m_i^{-k} [a_i, a_i + 1)``.  Each level-``(k+1)`` box splits into
``prod m_i`` children, and a box has the same shape as the ball
``B_{-k}`` (up to a fixed factor), which yields the sandwich constants.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dilation import Dilation, ball_quadratic
from .errors import DegenerateRectangle, NotAdmissible
from .grid import GridFunction, write_agf

# -- cubes -------------------------------------------------------------------------


def diagonal_conjugate(d: Dilation, S=None):
    """``(S, m)`` with ``A = S diag(m) S^{-1}`` and integer ``m_i >= 2``.

    ``S`` may be supplied; otherwise it is the identity for diagonal ``A`` and
    an eigenvector basis when ``A`` has real integer eigenvalues and is
    diagonalizable.
    """
    A = d.matrix
    n = d.dim
    if S is None:
        if np.allclose(A, np.diag(np.diag(A))):
            S = np.eye(n)
        else:
            vals, vecs = np.linalg.eig(A)
            if np.max(np.abs(vals.imag)) > 1e-12:
                raise NotAdmissible("dilation has complex eigenvalues")
            S = vecs.real
            if abs(np.linalg.det(S)) < 1e-10:
                raise NotAdmissible("dilation is not diagonalizable")
    S = np.asarray(S, dtype=float)
    Dm = np.linalg.solve(S, A @ S)
    m = np.diag(Dm)
    if np.max(np.abs(Dm - np.diag(m))) > 1e-9 * max(1.0, np.abs(A).max()):
        raise NotAdmissible("S does not diagonalize the dilation")
    mi = np.round(m)
    if np.max(np.abs(m - mi)) > 1e-9 or np.any(mi < 2):
        raise NotAdmissible(f"diagonal entries {m.tolist()} are not integers >= 2")
    return S, mi.astype(int)


@dataclass(frozen=True)
class Cube:
    level: int
    index: tuple
    grid: "DyadicGrid" = field(repr=False, compare=False)

    @property
    def sides(self) -> np.ndarray:
        return self.grid.m.astype(float) ** (-self.level)

    @property
    def center(self) -> np.ndarray:
        return self.grid.S @ ((np.asarray(self.index) + 0.5) * self.sides)

    def contains(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) @ self.grid.Sinv.T
        lo = np.asarray(self.index) * self.sides
        return np.all((y >= lo) & (y < lo + self.sides), axis=-1)

    def sample(self, count: int, rng) -> np.ndarray:
        y = (np.asarray(self.index) + rng.random((count, self.grid.dim))) * self.sides
        return y @ self.grid.S.T

    def vertices(self) -> np.ndarray:
        lo = np.asarray(self.index) * self.sides
        corners = np.array(list(itertools.product([0.0, 1.0], repeat=self.grid.dim)))
        return (lo + corners * self.sides) @ self.grid.S.T

    def parent(self, level: int) -> "Cube":
        """The unique cube of a coarser (or equal) level containing this one."""
        if level > self.level:
            raise ValueError("parent level must not exceed the cube's level")
        q = self.grid.m ** (self.level - level)
        return Cube(level, tuple(int(v) for v in np.floor_divide(np.asarray(self.index), q)), self.grid)


@dataclass
class DyadicGrid:
    dilation: Dilation
    S: np.ndarray
    m: np.ndarray
    v: int
    u: int
    levels: tuple
    admissibility: str = "diagonal-conjugate"

    @property
    def dim(self) -> int:
        return self.dilation.dim

    @property
    def Sinv(self) -> np.ndarray:
        return np.linalg.inv(self.S)

    def cube(self, k: int, index) -> Cube:
        return Cube(int(k), tuple(int(a) for a in np.atleast_1d(index)), self)

    def cube_containing(self, x, k: int) -> Cube:
        y = self.Sinv @ np.asarray(x, dtype=float)
        return self.cube(k, np.floor(y * self.m.astype(float) ** k).astype(int))

    def cubes_near(self, k: int, center, count: int) -> list:
        """The ``count`` level-``k`` cubes around the one containing ``center``."""
        c = self.cube_containing(center, k)
        r = int(math.ceil(count ** (1.0 / self.dim)))
        offs = itertools.product(range(-(r // 2), r - r // 2), repeat=self.dim)
        return [self.cube(k, np.asarray(c.index) + np.asarray(o)) for o in itertools.islice(offs, count)]

    def to_dict(self) -> dict:
        return {"matrix": self.dilation.matrix.tolist(), "S": self.S.tolist(), "m": self.m.tolist(),
                "v": self.v, "u": self.u, "levels": list(self.levels), "admissibility": self.admissibility}


def _box_in_ball(d: Dilation, S, m, k, j) -> bool:
    """``Q - Q`` (open box of half-sides ``m^-k`` in ``S``-coordinates) lies in ``B_j``."""
    half = m.astype(float) ** (-k)
    corners = np.array(list(itertools.product([-1.0, 1.0], repeat=d.dim))) * half
    q = ball_quadratic(d, corners @ np.asarray(S).T, j)
    return bool(np.all(q <= d.c * (1 + 1e-12)))


def _ball_in_box(d: Dilation, S, m, k, j) -> bool:
    """``B_j`` centred at a cube centre lies in the cube (half-sides ``m^-k / 2``)."""
    M = np.linalg.solve(S, d.power(j) @ d.ball_map)
    # extent of M(unit ball) along each S-coordinate
    ext = np.linalg.norm(M, axis=1)
    return bool(np.all(ext <= 0.5 * m.astype(float) ** (-k) * (1 + 1e-12)))


def christ_cubes(d: Dilation, levels=(-3, 3), S=None, v_range=(-1, -2, -3), u_max: int = 10) -> DyadicGrid:
    """Dyadic cubes for a diagonal-conjugate dilation with sandwich constants.

    ``(v, u)`` is the first pair (``v`` from ``v_range``, ``u = 1..u_max``) for
    which ``x_Q + B_{vk-u} in Q in x + B_{vk+u}`` holds at every level in
    ``levels``; both inclusions are decided exactly from the box corners and
    the ellipsoid extents.
    """
    S, m = diagonal_conjugate(d, S)
    for v in v_range:
        for u in range(1, u_max + 1):
            ok = all(_ball_in_box(d, S, m, k, v * k - u) and _box_in_ball(d, S, m, k, v * k + u)
                     for k in range(levels[0], levels[1] + 1))
            if ok:
                return DyadicGrid(d, S, m, v, u, tuple(levels))
    raise NotAdmissible("no sandwich constants found in the search range")


@dataclass
class SandwichReport:
    cubes: int
    points: int
    inner_violations: int
    outer_violations: int

    @property
    def ok(self) -> bool:
        return self.inner_violations == 0 and self.outer_violations == 0


def sandwich_check(grid: DyadicGrid, cubes: Sequence[Cube], samples: int = 1000, rng=None) -> SandwichReport:
    """Sampled check of the sandwich: points of ``x_Q + B_{vk-u}`` lie in ``Q``
    and ``y - x`` lies in ``B_{vk+u}`` for ``x, y`` drawn from ``Q``."""
    from .dilation import ball_membership, sample_ball

    rng = np.random.default_rng(0 if rng is None else rng)
    d = grid.dilation
    inner = outer = 0
    for Q in cubes:
        k = Q.level
        z = Q.center + sample_ball(d, grid.v * k - grid.u, samples, rng)
        inner += int(np.count_nonzero(~Q.contains(z)))
        x = Q.sample(samples, rng)
        y = Q.sample(samples, rng)
        outer += int(np.count_nonzero(~ball_membership(d, y - x, grid.v * k + grid.u)))
    return SandwichReport(len(cubes), len(cubes) * samples, inner, outer)


# -- atoms --------------------------------------------------------------------------


def required_moment_order(p: float, q_w: float, zeta_minus: float) -> int:
    """``s >= [(q_w/p - 1) / zeta_-]`` with the bracket read as the ceiling."""
    return max(0, int(math.ceil((q_w / p - 1.0) / zeta_minus - 1e-12)))


def analytic_critical_index(w) -> float:
    """``q_w`` for the closed-form weight families: 1 for constants and
    ``max(1, 1 + alpha)`` per factor for powers ``rho^alpha`` (``alpha > -1``)."""
    if w is None:
        return 1.0
    form = getattr(w, "analytic_form", None) or {}
    fam = form.get("family")
    if fam == "one":
        return 1.0
    if fam == "power":
        return max(1.0, 1.0 + form["alpha"])
    if fam in ("product-power", "sum-power"):
        return max(1.0, 1.0 + form["alpha1"], 1.0 + form["alpha2"])
    raise ValueError("q_w is not known in closed form for this weight; pass q_w explicitly")


@dataclass
class Rect:
    """Dyadic rectangle ``Q1 x Q2``."""

    Q1: Cube
    Q2: Cube

    @property
    def grids(self):
        return self.Q1.grid, self.Q2.grid

    def support_exponents(self) -> tuple:
        """Ball exponents of ``R''_i = x_{R_i} + B_{v_i(l_i - 1) + u_i + 3 sigma_i}``."""
        return tuple(g.v * (Q.level - 1) + g.u + 3 * g.dilation.sigma for g, Q in ((self.Q1.grid, self.Q1),
                                                                                       (self.Q2.grid, self.Q2)))

    def enlargement_exponents(self, gamma: int) -> tuple:
        return tuple(g.v * (Q.level - 1) + g.u + 5 * g.dilation.sigma + gamma
                     for g, Q in ((self.Q1.grid, self.Q1), (self.Q2.grid, self.Q2)))

    def to_dict(self) -> dict:
        return {"R1": {"level": self.Q1.level, "index": list(self.Q1.index)},
                "R2": {"level": self.Q2.level, "index": list(self.Q2.index)}}


def _factor_masks(rect: Rect, grid, exps) -> tuple:
    """Node masks of ``x_{R_i} + B_{exps[i]}`` on each factor grid."""
    g1, g2 = rect.grids
    n = g1.dim
    G1, G2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    m1 = ball_quadratic(g1.dilation, G1.points() - rect.Q1.center, exps[0]) < g1.dilation.c
    m2 = ball_quadratic(g2.dilation, G2.points() - rect.Q2.center, exps[1]) < g2.dilation.c
    return m1, m2


def enlargements(atom_or_rect, gamma: int) -> dict:
    """Centres and ball exponents of ``R_{1,gamma}`` and ``R_{2,gamma}``."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    rect = atom_or_rect.rect if isinstance(atom_or_rect, RectAtom) else atom_or_rect
    e1, e2 = rect.enlargement_exponents(gamma)
    return {"R1": {"center": rect.Q1.center.tolist(), "ball": e1},
            "R2": {"center": rect.Q2.center.tolist(), "ball": e2}}


def enlargement_mask(rect: Rect, grid, gamma: int) -> np.ndarray:
    m1, m2 = _factor_masks(rect, grid, rect.enlargement_exponents(gamma))
    n = rect.Q1.grid.dim
    return m1.reshape(m1.shape + (1,) * (grid.dim - n)) & m2.reshape((1,) * n + m2.shape)


def _monomials(points: np.ndarray, s: int) -> np.ndarray:
    """Columns ``x^alpha`` for ``|alpha| <= s`` at ``points`` (P, n)."""
    n = points.shape[1]
    cols = []
    for total in range(s + 1):
        for alpha in itertools.product(range(total + 1), repeat=n):
            if sum(alpha) == total:
                cols.append(np.prod(points ** np.asarray(alpha), axis=1))
    return np.stack(cols, axis=1)


def _project_out(values: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Remove the discrete-L^2 projection onto the columns of ``V`` from each
    column of ``values``; ``V`` is orthonormalized first for stability."""
    Qm, _ = np.linalg.qr(V)
    out = values - Qm @ (Qm.T @ values)
    # one reorthogonalization pass keeps the residual moments at roundoff
    return out - Qm @ (Qm.T @ out)


@dataclass
class AtomCertificate:
    support_ok: bool
    moment_residual: float
    norm_ratio: float
    trivial: bool
    tol: float = 1e-10

    @property
    def ok(self) -> bool:
        return self.support_ok and self.moment_residual <= self.tol and (self.trivial or abs(self.norm_ratio - 1.0) <= self.tol)

    def to_dict(self) -> dict:
        return {"support_ok": self.support_ok, "moment_residual": self.moment_residual,
                "norm_ratio": self.norm_ratio, "trivial": self.trivial, "ok": self.ok}


@dataclass
class RectAtom:
    rect: Rect
    samples: GridFunction
    triplet: tuple
    weight: object
    q_w: float
    certificate: AtomCertificate
    order: str = "x1-slices then x2-slices"
    meta: dict = field(default_factory=dict)

    @property
    def support_exponents(self) -> tuple:
        return self.rect.support_exponents()

    def to_dict(self) -> dict:
        return {"R": self.rect.to_dict(), "R_support_balls": list(self.support_exponents),
                "triplet": {"p": self.triplet[0], "q": self.triplet[1], "s": list(self.triplet[2])},
                "q_w": self.q_w, "moment_removal": self.order, "certificate": self.certificate.to_dict(),
                **self.meta}

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_agf(out / "atom.agf", self.samples)
        (out / "certificate.json").write_text(json.dumps(self.to_dict(), indent=2))


def _weight_values(w, grid):
    if w is None:
        return np.ones(grid.shape)
    vals = getattr(w, "values", None)
    return np.asarray(vals if vals is not None else w.samples.samples, dtype=float)


def _moments(a: np.ndarray, grid, n: int, s: tuple, mask1, mask2) -> float:
    """Largest relative slice moment ``|int a x1^alpha dx1| / int |a||x1^alpha| dx1``
    over every slice of the other variable (both families)."""
    G1, G2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    P1 = G1.points().reshape(-1, n)
    P2 = G2.points().reshape(-1, grid.dim - n)
    A = a.reshape(len(P1), len(P2))
    worst = 0.0
    for P, axis, order, h in ((P1, 0, s[0], G1.cell_volume), (P2, 1, s[1], G2.cell_volume)):
        V = _monomials(P, order)
        for j in range(V.shape[1]):
            mono = V[:, j][:, None] if axis == 0 else V[:, j][None, :]
            num = np.abs(np.sum(A * mono, axis=axis)) * h
            den = np.sum(np.abs(A * mono), axis=axis) * h
            rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
            worst = max(worst, float(rel.max()))
    return worst


def make_rectangular_atom(f: GridFunction, rect: Rect, triplet, w=None, q_w: Optional[float] = None,
                          tol: float = 1e-10) -> RectAtom:
    """Rectangular ``(p, q, s)``-atom built from ``f`` on the dyadic rectangle ``rect``.

    ``f`` is cut to ``R''``; then, slice by slice, the discrete L^2 projection
    onto polynomials of degree ``<= s1`` in ``x1`` is removed, followed by the
    projection onto degree ``<= s2`` in ``x2``.  Because ``R''`` is a product
    of node sets, the second pass keeps the moments made zero by the first.
    Finally the result is scaled so that ``||a||_{L^q_w} = w(R)^{1/q - 1/p}``.
    """
    p, q, s = float(triplet[0]), float(triplet[1]), tuple(int(v) for v in triplet[2])
    g1, g2 = rect.grids
    grid = f.grid
    n = g1.dim
    q_w = analytic_critical_index(w) if q_w is None else float(q_w)
    if not (q >= 2 and q > q_w):
        raise ValueError(f"q={q} must satisfy q >= 2 and q > q_w={q_w}")
    for si, g in zip(s, (g1, g2)):
        need = required_moment_order(p, q_w, g.dilation.zeta_minus)
        if si < need:
            raise ValueError(f"moment order {si} below the required {need}")
    m1, m2 = _factor_masks(rect, grid, rect.support_exponents())
    G1, G2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    for mask, G, si, name in ((m1, G1, s[0], "R''_1"), (m2, G2, s[1], "R''_2")):
        pts = G.points()[mask]
        for ax in range(G.dim):
            if len(np.unique(pts[:, ax])) < si + 1:
                raise DegenerateRectangle(f"{name} holds fewer than {si + 1} nodes along axis {ax}")
    i1 = np.flatnonzero(m1.reshape(-1))
    i2 = np.flatnonzero(m2.reshape(-1))
    P1 = G1.points().reshape(-1, n)[i1]
    P2 = G2.points().reshape(-1, grid.dim - n)[i2]
    F = np.asarray(f.samples, dtype=float).reshape(m1.size, m2.size)
    block = F[np.ix_(i1, i2)]
    block = _project_out(block, _monomials(P1, s[0]))
    block = _project_out(block.T, _monomials(P2, s[1])).T
    data = np.zeros_like(F)
    data[np.ix_(i1, i2)] = block
    data = data.reshape(grid.shape)
    wv = _weight_values(w, grid)
    base = _rect_mask(rect, grid)
    wR = float(np.sum(wv[base]) * grid.cell_volume)
    if wR <= 0:
        raise DegenerateRectangle("the rectangle R holds no grid node")
    norm = float((np.sum(np.abs(data) ** q * wv) * grid.cell_volume) ** (1 / q))
    scale_ref = float(np.max(np.abs(f.samples))) if f.samples.size else 0.0
    trivial = norm <= 1e-12 * max(scale_ref, 1e-300) * (grid.cell_volume * data.size) ** (1 / q)
    if trivial:
        data[:] = 0.0
    else:
        data *= wR ** (1 / q - 1 / p) / norm
    atom = RectAtom(rect, GridFunction(grid, data, "space", {"atom": True}), (p, q, s), w, q_w,
                    AtomCertificate(True, 0.0, 1.0, trivial, tol), meta={"w_R": wR})
    atom.certificate = certify_atom(atom, tol)
    return atom


def _rect_mask(rect: Rect, grid) -> np.ndarray:
    n = rect.Q1.grid.dim
    G1, G2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    a = rect.Q1.contains(G1.points())
    b = rect.Q2.contains(G2.points())
    return a.reshape(a.shape + (1,) * (grid.dim - n)) & b.reshape((1,) * n + b.shape)


def certify_atom(atom: RectAtom, tol: float = 1e-10) -> AtomCertificate:
    """Re-derive the three atom conditions with separate code: support from
    the ball quadratic forms, slice moments by direct sums against
    monomials, and the weighted norm against ``w(R)^{1/q - 1/p}``."""
    rect, grid = atom.rect, atom.samples.grid
    a = np.asarray(atom.samples.samples, dtype=float)
    n = rect.Q1.grid.dim
    m1, m2 = _factor_masks(rect, grid, rect.support_exponents())
    support = m1.reshape(m1.shape + (1,) * (grid.dim - n)) & m2.reshape((1,) * n + m2.shape)
    support_ok = bool(np.all(a[~support] == 0))
    p, q, s = atom.triplet
    mom = _moments(a, grid, n, s, m1, m2)
    wv = _weight_values(atom.weight, grid)
    norm = float((np.sum(np.abs(a) ** q * wv) * grid.cell_volume) ** (1 / q))
    wR = float(np.sum(wv[_rect_mask(rect, grid)]) * grid.cell_volume)
    target = wR ** (1 / q - 1 / p)
    trivial = not np.any(a)
    return AtomCertificate(support_ok, mom, norm / target if target > 0 else float("inf"), trivial, tol)


def remove_moments(atom: RectAtom) -> RectAtom:
    """Apply the slice projections again (idempotence check) without rescaling."""
    rect, grid = atom.rect, atom.samples.grid
    n = rect.Q1.grid.dim
    m1, m2 = _factor_masks(rect, grid, rect.support_exponents())
    i1 = np.flatnonzero(m1.reshape(-1))
    i2 = np.flatnonzero(m2.reshape(-1))
    G1, G2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    P1 = G1.points().reshape(-1, n)[i1]
    P2 = G2.points().reshape(-1, grid.dim - n)[i2]
    F = atom.samples.samples.reshape(m1.size, m2.size)
    block = _project_out(F[np.ix_(i1, i2)], _monomials(P1, atom.triplet[2][0]))
    block = _project_out(block.T, _monomials(P2, atom.triplet[2][1])).T
    out = np.zeros_like(F)
    out[np.ix_(i1, i2)] = block
    new = RectAtom(rect, atom.samples.like(out.reshape(grid.shape)), atom.triplet, atom.weight, atom.q_w,
                   atom.certificate, atom.order, dict(atom.meta))
    new.certificate = certify_atom(new, atom.certificate.tol)
    return new
