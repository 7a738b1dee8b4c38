"""Product singular-integral kernels: analytic families, condition checks and
application to sampled fields.

Kernels are functions on the complement of the coordinate axes.  Pairings
with bumps are principal values: the region ``rho_i(y_i) < delta_i`` is cut
out and ``delta_i`` runs down the ladder ``delta, delta/b, delta/b^2, ...``.
Because the step quasi-norm is constant on shells, the increment between two
rungs is exactly one shell's contribution, and the ladder converges when
those contributions shrink geometrically.

Principal values are computed for one-dimensional factors (``n_i = 1``);
two-dimensional pairings of non-separable kernels are formed as tensor
quadratures of the same one-dimensional shell partitions.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .dilation import Dilation, continuous_quasi_norm, log_quasi_norm, make_dilation, quasi_norm, sample_ball
from .errors import (DerivativeUnstable, PVNotConvergent, ProfileNotMeanZero, ProfileNotPeriodic)
from .grid import Grid, GridFunction
from .transforms import convolve

# -- profiles ---------------------------------------------------------------------


def _pts(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def profile_sign(d: Dilation) -> Callable:
    """``sign(x_1)``; dilation-periodic when ``A`` preserves the half-space
    ``x_1 > 0`` (true for diagonal ``A`` with positive first entry)."""

    def omega(x):
        return np.sign(_pts(x, d.dim)[..., 0])

    return omega


def profile_logsine(d: Dilation) -> Callable:
    """``sin(2 pi log_b rho_c(x)) sign(x_1)``: smooth, odd, dilation-periodic."""

    def omega(x):
        x = _pts(x, d.dim)
        if d.dim == 1:
            r = _continuous_rho_1d(d, x)
            with np.errstate(divide="ignore"):
                u = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)) / np.log(d.b), 0.0)
        else:
            u = log_quasi_norm(d, x)
            u = np.where(np.isfinite(u), u, 0.0)
        return np.sin(2 * np.pi * u) * np.sign(x[..., 0])

    return omega


def profile_one(d: Dilation) -> Callable:
    """Constant 1: no cancellation (fails the shell-mean test)."""

    def omega(x):
        return np.ones(_pts(x, d.dim).shape[:-1])

    return omega


PROFILES = {"sign": profile_sign, "logsine": profile_logsine, "one": profile_one}


def check_profile(omega: Callable, d: Dilation, rng=None, samples: int = 2000, points: int = 4096,
                  tol: float = 1e-10) -> dict:
    """Measure dilation-periodicity ``max |Omega(Ax) - Omega(x)|`` on random
    points and the shell mean ``|int_{B_1 minus B_0} Omega| / |shell|`` by
    midpoint quadrature on a symmetric box."""
    rng = np.random.default_rng(0 if rng is None else rng)
    x = sample_ball(d, 3, samples, rng)
    x = x[np.any(np.abs(x) > 1e-12, axis=1)]
    per = float(np.max(np.abs(omega(x @ d.matrix.T) - omega(x))))
    half = np.sqrt(d.c * np.diag(np.linalg.inv(d.power(-1).T @ d.P @ d.power(-1))))
    per_axis = points if d.dim == 1 else (512 if d.dim == 2 else 64)
    axes = [(np.arange(per_axis) + 0.5) / per_axis * 2 * hw - hw for hw in half]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d.dim)
    r = np.asarray(quasi_norm(d, grid))
    shell = r == 1.0
    vals = omega(grid[shell])
    mean = float(abs(np.sum(vals)) / max(shell.sum(), 1))
    return {"periodicity": per, "shell_mean": mean, "periodic": per <= tol, "mean_zero": mean <= tol}


# -- kernels ---------------------------------------------------------------------


@dataclass
class KernelModel:
    """Kernel ``K(x1, x2)`` on the complement of the coordinate axes.

    ``factors`` holds the one-variable kernels when ``K = k1 (x) k2``; the
    principal-value routines use them to factor pairings.
    """

    dilations: tuple
    evaluator: Callable
    orders: tuple = (0, 0)
    N: tuple = (1, 1)
    eps: tuple = (None, None)
    C1: Optional[float] = None
    family: str = "user"
    factors: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eps[0] is None or self.eps[1] is None:
            self.eps = tuple(d.zeta_minus * (1 - 1e-3) for d in self.dilations)

    @property
    def dims(self) -> tuple:
        return tuple(d.dim for d in self.dilations)

    def __call__(self, x1, x2):
        n, m = self.dims
        x1 = _pts(x1, n)
        x2 = _pts(x2, m)
        vals = np.asarray(self.evaluator(x1, x2), dtype=float)
        sing = ~np.any(x1 != 0, axis=-1) | ~np.any(x2 != 0, axis=-1)
        return np.where(sing, 0.0, vals)

    def swapped(self) -> "KernelModel":
        """The kernel with the roles of the two variables interchanged."""
        ev = self.evaluator
        return KernelModel((self.dilations[1], self.dilations[0]), lambda a, b: ev(b, a),
                           self.orders[::-1], self.N[::-1], self.eps[::-1], self.C1, self.family,
                           None if self.factors is None else self.factors[::-1], dict(self.params))


def _continuous_rho_1d(d: Dilation, x: np.ndarray) -> np.ndarray:
    # in one dimension the continuous quasi-norm is linear: |x| / half-width(Delta)
    return np.abs(x[..., 0]) * np.sqrt(d.P[0, 0] / d.c)


def _factor_kernel(omega: Callable, d: Dilation, denominator: str) -> Callable:
    def k(x):
        x = _pts(x, d.dim)
        if denominator == "step":
            r = np.asarray(quasi_norm(d, x), dtype=float)
        elif d.dim == 1:
            r = _continuous_rho_1d(d, x)
        else:
            r = np.asarray(continuous_quasi_norm(d, x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, omega(x) / np.where(r > 0, r, 1.0), 0.0)
        return out

    return k


def make_tensor_cz_kernel(d1: Dilation, d2: Dilation, profile1="sign", profile2=None,
                          denominator: str = "continuous", validate: bool = True,
                          orders=None, N=(3, 3), C1=None) -> KernelModel:
    """``K(x1, x2) = Omega1(x1) Omega2(x2) / (rho1(x1) rho2(x2))``.

    The denominators use the continuous quasi-norm by default, which agrees
    with the step quasi-norm on inner shell boundaries and makes ``K``
    homogeneous and (in one dimension) smooth off the axes;
    ``denominator="step"`` uses the step quasi-norm and produces a kernel
    with jumps across shell boundaries.
    """
    profile2 = profile1 if profile2 is None else profile2
    names = []
    omegas = []
    for prof, d in ((profile1, d1), (profile2, d2)):
        if isinstance(prof, str):
            names.append(prof)
            omegas.append(PROFILES[prof](d))
        else:
            names.append(getattr(prof, "__name__", "custom"))
            omegas.append(prof)
    if validate:
        for om, d, name in zip(omegas, (d1, d2), names):
            rep = check_profile(om, d)
            if not rep["periodic"]:
                raise ProfileNotPeriodic(f"profile {name}: |Omega(Ax) - Omega(x)| up to {rep['periodicity']:.3e}")
            if not rep["mean_zero"]:
                raise ProfileNotMeanZero(f"profile {name}: shell mean {rep['shell_mean']:.3e}")
    k1 = _factor_kernel(omegas[0], d1, denominator)
    k2 = _factor_kernel(omegas[1], d2, denominator)

    def evaluator(x1, x2):
        return k1(x1) * k2(x2)

    smooth = denominator == "continuous" and all(n in ("sign", "logsine") for n in names) and d1.dim == d2.dim == 1
    if orders is None:
        orders = (2, 2) if smooth else (0, 0)
    return KernelModel((d1, d2), evaluator, tuple(orders), tuple(N), (None, None), C1, "tensor-cz",
                       (k1, k2), {"profiles": names, "denominator": denominator})


def zero_kernel(d1: Dilation, d2: Dilation) -> KernelModel:
    zero = lambda x: np.zeros(_pts(x, 1).shape[:-1])  # noqa: E731
    return KernelModel((d1, d2), lambda a, b: np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1])),
                       (2, 2), (1, 1), (None, None), None, "zero",
                       (lambda x: np.zeros(_pts(x, d1.dim).shape[:-1]),
                        lambda x: np.zeros(_pts(x, d2.dim).shape[:-1])), {})


def sampled_kernel(gf: GridFunction, d1: Dilation, d2: Dilation) -> KernelModel:
    """Kernel from samples on a product grid, linearly interpolated; points
    within one cell of either axis evaluate to zero."""
    from scipy.interpolate import RegularGridInterpolator

    grid = gf.grid
    n = d1.dim
    interp = RegularGridInterpolator(grid.axes(), gf.samples, method="linear", bounds_error=False, fill_value=0.0)
    h = np.asarray(grid.h)

    def evaluator(x1, x2):
        x1, x2 = np.broadcast_arrays(x1, x2)
        x = np.concatenate([x1, x2], axis=-1)
        vals = interp(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1])
        near = np.all(np.abs(x1) < h[:n], axis=-1) | np.all(np.abs(x2) < h[n:], axis=-1)
        return np.where(near, 0.0, vals)

    return KernelModel((d1, d2), evaluator, (0, 0), (1, 1), (None, None), None, "user-sampled")


def kernel_from_spec(spec: str, d1: Dilation, d2: Dilation) -> KernelModel:
    """``"tensorcz:profile=sign"``, ``"tensorcz:profile=logsine"``,
    ``"tensorcz:profile=one"`` (unvalidated), ``"tensorcz:profile=sign,denominator=step"``,
    ``"zero"``, or a path to an AGF1 product-grid sample file."""
    name, _, rest = spec.partition(":")
    params = dict(item.split("=", 1) for item in filter(None, rest.split(",")))
    if name == "zero":
        return zero_kernel(d1, d2)
    if name == "tensorcz":
        prof = params.get("profile", "sign")
        return make_tensor_cz_kernel(d1, d2, params.get("profile1", prof), params.get("profile2", prof),
                                     params.get("denominator", "continuous"), validate=(prof != "one"))
    from .grid import read_agf

    return sampled_kernel(read_agf(spec), d1, d2)


# -- reports ---------------------------------------------------------------------


@dataclass
class ConditionReport:
    condition: str
    worst: float
    argument: list
    samples: int
    C1: Optional[float] = None
    passed: Optional[bool] = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.C1 is not None and self.passed is None:
            self.passed = bool(self.worst <= self.C1)

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _reduce(values: np.ndarray, points: np.ndarray):
    """Max with first-index tie-break (deterministic)."""
    if values.size == 0:
        return 0.0, []
    i = int(np.argmax(values))
    return float(values[i]), np.asarray(points[i]).tolist()


# -- sampling --------------------------------------------------------------------


@dataclass
class SampleSpec:
    shells: tuple = (-4, 4)
    per_shell: int = 6
    seed: int = 0
    boundary: bool = True


def shell_points(d: Dilation, spec: SampleSpec) -> np.ndarray:
    """Points with ``rho(x) = b^l`` for ``l`` in the shell range: random ones
    plus (optionally) points on the inner boundary of each shell, where the
    continuous and step quasi-norms agree."""
    rng = np.random.default_rng(spec.seed)
    chart = []
    while sum(len(c) for c in chart) < spec.per_shell:
        u = sample_ball(d, 1, 4 * spec.per_shell, rng)
        chart.append(u[np.asarray(quasi_norm(d, u)) == 1.0])
    chart = np.concatenate(chart)[: spec.per_shell]
    if spec.boundary:
        dirs = np.eye(d.dim)
        bnd = np.concatenate([dirs, -dirs]) @ d.ball_map.T
        bnd = bnd[np.asarray(quasi_norm(d, bnd)) == 1.0]
        chart = np.concatenate([bnd, chart])
    out = []
    for l in range(spec.shells[0], spec.shells[1] + 1):
        out.append(chart @ d.power(l).T)
    return np.concatenate(out)


# -- finite differences on charts ---------------------------------------------------

_STENCILS = {
    0: (np.array([0]), np.array([1.0])),
    1: (np.arange(-2, 3), np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0),
    2: (np.arange(-2, 3), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
    3: (np.arange(-3, 4), np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0),
}


def _multi_indices(n: int, total: int) -> list:
    if n == 1:
        return [(total,)]
    return [(a,) + rest for a in range(total + 1) for rest in _multi_indices(n - 1, total - a)]


def _upto(n: int, s: int) -> list:
    return [a for t in range(s + 1) for a in _multi_indices(n, t)]


def _stencil(alpha: Sequence[int], step: float):
    """Offsets (P, dim) and weights (P,) for ``d^alpha`` at spacing ``step``."""
    offs, wts = [np.zeros(0)], [np.ones(1)]
    grids = [_STENCILS[a] for a in alpha]
    o = np.stack(np.meshgrid(*[g[0] for g in grids], indexing="ij"), -1).reshape(-1, len(alpha))
    w = np.ones(len(o))
    for i, g in enumerate(grids):
        w = w * g[1][np.searchsorted(g[0], o[:, i])]
    keep = w != 0
    total = sum(alpha)
    return o[keep] * step, w[keep] / step ** total


def _chart_derivative(F: Callable, u: np.ndarray, alpha, step: float) -> np.ndarray:
    """``d^alpha F`` at each row of ``u`` by tensor order-4 stencils."""
    offs, wts = _stencil(alpha, step)
    vals = F(u[:, None, :] + offs[None, :, :])
    return vals @ wts


def _stable_derivative(F, u, alpha, step, rel=0.01, floor=0.0):
    """Derivative at ``step`` and ``step/2``; raise DerivativeUnstable when the
    two disagree by more than ``rel`` (relative) at a non-negligible value."""
    a = _chart_derivative(F, u, alpha, step)
    if sum(alpha) == 0:
        return a
    b = _chart_derivative(F, u, alpha, step / 2)
    big = np.maximum(np.abs(a), np.abs(b))
    bad = (np.abs(a - b) > rel * big) & (big > floor)
    if bad.any():
        i = int(np.argmax(bad))
        raise DerivativeUnstable(f"derivative {tuple(alpha)} changes by {abs(a[i] - b[i]) / big[i]:.2%} under "
                                 f"stencil refinement", u[i].tolist())
    return b


# -- (K1) -------------------------------------------------------------------------


def _chart_step(d: Dilation) -> float:
    # charts live in B_1 \ B_0; step tied to the size of Delta
    return 1e-3 * float(np.sqrt(d.c / np.linalg.eigvalsh(d.P).max()))


def check_K1(kern: KernelModel, s1: int = 0, s2: int = 0, spec: Optional[SampleSpec] = None) -> ConditionReport:
    """Sup of ``|d^a1 d^a2 [K(A1^l1 ., A2^l2 .)](A1^-l1 x1, A2^-l2 x2)| rho1 rho2``
    over sampled shells and ``|a_i| <= s_i``."""
    spec = spec or SampleSpec()
    d1, d2 = kern.dilations
    X1 = shell_points(d1, spec)
    X2 = shell_points(d2, SampleSpec(spec.shells, spec.per_shell, spec.seed + 1, spec.boundary))
    l1 = np.round(np.log(quasi_norm(d1, X1)) / np.log(d1.b)).astype(int)
    l2 = np.round(np.log(quasi_norm(d2, X2)) / np.log(d2.b)).astype(int)
    n, m = d1.dim, d2.dim
    step1, step2 = _chart_step(d1), _chart_step(d2)
    best, arg = 0.0, []
    count = 0
    for i in range(len(X1)):
        M1 = d1.power(int(l1[i]))
        u = X1[i] @ d1.power(-int(l1[i])).T
        # all x2 samples at once, grouped by shell
        for L in np.unique(l2):
            sel = l2 == L
            M2 = d2.power(int(L))
            V = X2[sel] @ d2.power(-int(L)).T
            pts = np.concatenate([np.broadcast_to(u, (len(V), n)), V], axis=1)

            def F(z, M1=M1, M2=M2):
                return kern(z[..., :n] @ M1.T, z[..., n:] @ M2.T)

            scale = quasi_norm(d1, X1[i]) * np.asarray(quasi_norm(d2, X2[sel]))
            for a1 in _upto(n, s1):
                for a2 in _upto(m, s2):
                    alpha = tuple(a1) + tuple(a2)
                    steps = np.concatenate([np.full(n, step1), np.full(m, step2)])
                    val = _stable_derivative_mixed(F, pts, alpha, steps)
                    q = np.abs(val) * scale
                    count += len(q)
                    j = int(np.argmax(q))
                    if q[j] > best:
                        best = float(q[j])
                        arg = [X1[i].tolist(), X2[sel][j].tolist(), list(alpha)]
    return ConditionReport("K1", best, arg, count, kern.C1, details={"orders": [s1, s2]})


def _stable_derivative_mixed(F, pts, alpha, steps, rel=0.01):
    """Like :func:`_stable_derivative` with per-coordinate steps."""
    scale = np.asarray(steps, dtype=float)

    def G(z):
        return F(z * scale)

    u = pts / scale
    vals = _stable_derivative(G, u, alpha, 1.0, rel, floor=1e-12 * (1 + np.max(np.abs(F(pts)))))
    return vals / np.prod(scale ** np.asarray(alpha))


# -- one-dimensional principal values ---------------------------------------------------

_GL_CACHE = {}


def _gauss(npts: int):
    if npts not in _GL_CACHE:
        _GL_CACHE[npts] = np.polynomial.legendre.leggauss(npts)
    return _GL_CACHE[npts]


def _half_width(d: Dilation) -> float:
    """Half-width of ``Delta`` for a one-dimensional dilation."""
    return float(np.sqrt(d.c / d.P[0, 0]))


def shell_radius(d: Dilation, j: int) -> float:
    return _half_width(d) * abs(float(d.matrix[0, 0])) ** j


def _require_1d(d: Dilation):
    if d.dim != 1:
        raise NotImplementedError("principal values are implemented for one-dimensional factors")


@dataclass
class PVResult:
    value: float
    ladder: list
    increments: list
    ratio: float
    converged: bool


def pv_shell_contributions(kfun: Callable, ffun: Callable, d: Dilation, lo: float, hi: float,
                           depth: int = 14, npts: int = 24, with_abs: bool = False):
    """Shell-by-shell contributions to ``int_{lo}^{hi} k(z) f(z) dz``.

    Returns ``shells`` where ``shells[t]`` is the integral over
    ``r_{J-t-1} <= |z| < r_{J-t}`` (``J`` the first shell beyond the
    support).  When ``0`` is not in ``(lo, hi)`` no principal value is needed
    and the shells simply tile the interval.  With ``with_abs`` the integral
    of ``|k f|`` over the same pieces is returned too, as a scale for deciding
    which contributions are roundoff.
    """
    _require_1d(d)
    x, w = _gauss(npts)
    far = max(abs(lo), abs(hi))
    near = 0.0 if lo < 0 < hi else min(abs(lo), abs(hi))
    a = abs(float(d.matrix[0, 0]))
    w0 = _half_width(d)
    J = int(np.ceil(np.log(far / w0) / np.log(a))) + 1 if far > 0 else 0
    pieces, absolute = [], []
    for t in range(depth + J + 200):
        j = J - t - 1
        r0, r1 = w0 * a ** j, w0 * a ** (j + 1)
        if r1 <= near:
            break
        total, mag = 0.0, 0.0
        for s0, s1 in ((r0, r1), (-r1, -r0)):
            p0, p1 = max(s0, lo), min(s1, hi)
            if p1 > p0:
                z = 0.5 * (p1 - p0) * x + 0.5 * (p1 + p0)
                v = kfun(z[:, None]) * ffun(z)
                total += 0.5 * (p1 - p0) * np.dot(w, v)
                mag += 0.5 * (p1 - p0) * np.dot(w, np.abs(v))
        pieces.append(total)
        absolute.append(mag)
        if lo < 0 < hi and t >= depth + J:
            break
    if with_abs:
        return np.array(pieces), float(np.sum(absolute))
    return np.array(pieces)


def _ladder(pieces: np.ndarray, b: float, start: int):
    """Principal-value ladder from shell contributions: rung ``m`` keeps the
    shells down to index ``start + m``."""
    sums = np.cumsum(pieces)
    ladder = sums[start:]
    inc = pieces[start + 1:]
    return ladder, inc


def _ladder_ratio(inc: np.ndarray, scale: float) -> float:
    inc = np.abs(np.asarray(inc, dtype=float))
    sig = inc > 1e-12 * max(scale, 1e-300)
    if sig.sum() < 2:
        return 0.0
    tail = inc[sig]
    tail = tail[len(tail) // 2 - 1:] if len(tail) > 3 else tail
    r = tail[1:] / tail[:-1]
    return float(np.median(r))


def pv_integral(kfun: Callable, ffun: Callable, d: Dilation, lo: float, hi: float, depth: int = 14,
                npts: int = 24, raise_on_divergence: bool = True) -> PVResult:
    """Principal value of ``int k f`` over ``[lo, hi]`` by the shell ladder.

    The ladder is Cauchy when the ratio of successive increments is at most
    ``1/b + 0.1``; the value is the deepest rung plus the geometric tail.
    """
    pieces, mag = pv_shell_contributions(kfun, ffun, d, lo, hi, depth, npts, with_abs=True)
    if not (lo < 0 < hi):
        v = float(np.sum(pieces))
        return PVResult(v, [v], [], 0.0, True)
    start = max(0, len(pieces) - depth - 1)
    ladder, inc = _ladder(pieces, d.b, start)
    ratio = _ladder_ratio(inc, mag)
    converged = ratio <= 1.0 / d.b + 0.1
    value = float(ladder[-1])
    if converged and len(inc) and ratio < 1:
        value += float(inc[-1]) * ratio / (1 - ratio)
    if not converged and raise_on_divergence:
        raise PVNotConvergent(f"shell increments shrink by {ratio:.3f} per rung (need <= {1 / d.b + 0.1:.3f})",
                              ladder.tolist())
    return PVResult(value, ladder.tolist(), inc.tolist(), ratio, converged)


# -- bumps ---------------------------------------------------------------------------


@dataclass
class PolyBump:
    """``scale * p(t) (1 - t^2)^(N+1)`` with ``t = (x - center)/width`` on
    ``|t| < 1``; C^N with compact support."""

    center: float
    width: float
    coeffs: tuple
    N: int
    scale: float = 1.0

    def _poly(self):
        base = npoly.polypow([1.0, 0.0, -1.0], self.N + 1)
        return npoly.polymul(np.asarray(self.coeffs, dtype=float), base)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        t = (x - self.center) / self.width
        return np.where(np.abs(t) < 1, self.scale * npoly.polyval(t, self._poly()), 0.0)

    def derivative_bound(self, order: int) -> float:
        p = self._poly()
        t = np.linspace(-1, 1, 4001)
        out = 0.0
        for k in range(order + 1):
            out = max(out, float(np.max(np.abs(npoly.polyval(t, npoly.polyder(p, k))))) / self.width ** k)
        return out * self.scale

    def normalized(self, N: int, target: float = 1.0) -> "PolyBump":
        return PolyBump(self.center, self.width, self.coeffs, self.N, self.scale * target / self.derivative_bound(N))

    @property
    def support(self):
        return (self.center - self.width, self.center + self.width)


def bump_family(d: Dilation, N: int, count: int = 6, seed: int = 0, j: int = 0) -> List[PolyBump]:
    """Normalized ``N``-bumps supported in ``B_j`` (one-dimensional): an even
    bump, an odd bump, then randomly centred and shaped ones."""
    _require_1d(d)
    R = shell_radius(d, j) * (1 - 1e-12)
    rng = np.random.default_rng(seed)
    out = [PolyBump(0.0, R, (1.0,), N).normalized(N), PolyBump(0.0, R, (0.0, 1.0), N).normalized(N)]
    while len(out) < count:
        width = R * rng.uniform(0.3, 1.0)
        center = rng.uniform(-(R - width), R - width)
        coeffs = tuple(rng.standard_normal(3))
        out.append(PolyBump(center, width, coeffs, N).normalized(N))
    return out[:count]


def odd_bump(d: Dilation, N: int, j: int = 0, mean_zero: bool = True) -> PolyBump:
    """Odd normalized bump on ``B_j`` (mean zero, nonzero first moment)."""
    _require_1d(d)
    return PolyBump(0.0, shell_radius(d, j) * (1 - 1e-12), (0.0, 1.0), N).normalized(N)


# -- (K2), partial kernels, (K3) ------------------------------------------------------


def _dilated(f: Callable, d: Dilation, k: int) -> Callable:
    a = float(d.matrix[0, 0]) ** k
    return lambda z: f(a * np.asarray(z))


def pairing(kern: KernelModel, f1: PolyBump, f2: PolyBump, k1: int, k2: int, depth: int = 14):
    """``<K, f1(A1^k1 .) (x) f2(A2^k2 .)>`` by principal values; returns
    ``(value, ratio, ladder)`` where the ladder shrinks both cut-offs together."""
    d1, d2 = kern.dilations
    g1, g2 = _dilated(f1, d1, k1), _dilated(f2, d2, k2)
    a1, a2 = float(d1.matrix[0, 0]) ** k1, float(d2.matrix[0, 0]) ** k2
    s1 = sorted(np.array(f1.support) / a1)
    s2 = sorted(np.array(f2.support) / a2)
    if kern.factors is not None:
        p1, m1 = pv_shell_contributions(kern.factors[0], g1, d1, s1[0], s1[1], depth, with_abs=True)
        p2, m2 = pv_shell_contributions(kern.factors[1], g2, d2, s2[0], s2[1], depth, with_abs=True)
        n = min(len(p1), len(p2))
        c1 = np.cumsum(p1)[-n:]
        c2 = np.cumsum(p2)[-n:]
        ladder = c1 * c2
        scale = m1 * m2
    else:
        ladder, scale = _pairing_tensor(kern, g1, g2, d1, d2, s1, s2, depth)
    inc = np.diff(ladder)
    ratio = _ladder_ratio(inc, scale)
    b = max(d1.b, d2.b)
    if ratio > 1.0 / b + 0.1:
        raise PVNotConvergent(f"pairing ladder increments shrink by {ratio:.3f} per rung", ladder.tolist())
    value = float(ladder[-1])
    if len(inc) and 0 < ratio < 1:
        value += float(inc[-1]) * ratio / (1 - ratio)
    return value, ratio, ladder.tolist()


def _nodes_1d(d: Dilation, lo: float, hi: float, depth: int, npts: int = 16):
    """Quadrature nodes, weights and shell labels tiling ``[lo, hi]`` minus
    the deepest excised shell."""
    x, w = _gauss(npts)
    far = max(abs(lo), abs(hi))
    a = abs(float(d.matrix[0, 0]))
    w0 = _half_width(d)
    J = int(np.ceil(np.log(far / w0) / np.log(a))) + 1
    Z, W, lab = [], [], []
    for t in range(J + depth):
        j = J - t - 1
        r0, r1 = w0 * a ** j, w0 * a ** (j + 1)
        for s0, s1 in ((r0, r1), (-r1, -r0)):
            p0, p1 = max(s0, lo), min(s1, hi)
            if p1 > p0:
                Z.append(0.5 * (p1 - p0) * x + 0.5 * (p1 + p0))
                W.append(0.5 * (p1 - p0) * w)
                lab.append(np.full(npts, t))
    return np.concatenate(Z), np.concatenate(W), np.concatenate(lab)


def _pairing_tensor(kern, g1, g2, d1, d2, s1, s2, depth):
    z1, w1, t1 = _nodes_1d(d1, s1[0], s1[1], depth)
    z2, w2, t2 = _nodes_1d(d2, s2[0], s2[1], depth)
    vals = kern(z1[:, None, None], z2[None, :, None]) * (g1(z1) * w1)[:, None] * (g2(z2) * w2)[None, :]
    T = max(t1.max(), t2.max()) + 1
    C = np.zeros((T, T))
    np.add.at(C, (t1[:, None].repeat(len(z2), 1), t2[None, :].repeat(len(z1), 0)), vals)
    # rung m keeps shells with label <= m in both variables
    rungs = [C[: m + 1, : m + 1].sum() for m in range(T)]
    start = max(0, T - depth - 1)
    return np.array(rungs[start:]), float(np.sum(np.abs(vals)))


def check_K2(kern: KernelModel, bumps: Sequence[PolyBump], k_range=(-3, 3), depth: int = 14) -> ConditionReport:
    """Sup of ``|<K, psi1(A1^k1 .) (x) psi2(A2^k2 .)>|`` over bump pairs and
    scales; the worst ladder ratio is reported in ``details``."""
    best, arg, worst_ratio, count = 0.0, [], 0.0, 0
    for i, f1 in enumerate(bumps):
        for j, f2 in enumerate(bumps):
            for k1 in range(k_range[0], k_range[1] + 1):
                for k2 in range(k_range[0], k_range[1] + 1):
                    v, ratio, _ = pairing(kern, f1, f2, k1, k2, depth)
                    count += 1
                    worst_ratio = max(worst_ratio, ratio)
                    if abs(v) > best:
                        best, arg = abs(v), [i, j, k1, k2]
    return ConditionReport("K2", best, arg, count, kern.C1, details={"ladder_ratio": worst_ratio})


def partial_kernel(kern: KernelModel, psi2: PolyBump, k2: int, depth: int = 14) -> Callable:
    """``x1 -> PV int K(x1, y2) psi2(A2^k2 y2) dy2``."""
    d1, d2 = kern.dilations
    g2 = _dilated(psi2, d2, k2)
    a2 = float(d2.matrix[0, 0]) ** k2
    lo, hi = sorted(np.array(psi2.support) / a2)
    if kern.factors is not None:
        c = pv_integral(kern.factors[1], g2, d2, lo, hi, depth).value
        k1 = kern.factors[0]

        def tensor_partial(x1):
            return c * k1(x1)

        tensor_partial.constant = c
        return tensor_partial
    cache = {}

    def generic(x1):
        x1 = _pts(x1, d1.dim)
        flat = x1.reshape(-1, d1.dim)
        out = np.empty(len(flat))
        for i, p in enumerate(flat):
            key = tuple(p)
            if key not in cache:
                kf = lambda z, p=p: kern(np.broadcast_to(p, z.shape[:-1] + (d1.dim,)), z)  # noqa: E731
                cache[key] = pv_integral(kf, g2, d2, lo, hi, depth).value
            out[i] = cache[key]
        return out.reshape(x1.shape[:-1])

    return generic


def check_K3(kern: KernelModel, bumps: Sequence[PolyBump], k_range=(-3, 3), s1: int = 0,
             spec: Optional[SampleSpec] = None) -> ConditionReport:
    """Sup of ``|d^a [K^{psi2,k2}(A1^l .)](A1^-l x1)| rho1(x1)`` with ``|a| = s1``."""
    spec = spec or SampleSpec()
    d1 = kern.dilations[0]
    X1 = shell_points(d1, spec)
    l1 = np.round(np.log(quasi_norm(d1, X1)) / np.log(d1.b)).astype(int)
    best, arg, count = 0.0, [], 0
    step = _chart_step(d1)
    for bi, f2 in enumerate(bumps):
        for k2 in range(k_range[0], k_range[1] + 1):
            pk = partial_kernel(kern, f2, k2)
            for L in np.unique(l1):
                sel = l1 == L
                M = d1.power(int(L))
                u = X1[sel] @ d1.power(-int(L)).T
                F = lambda z, M=M: pk(z @ M.T)  # noqa: E731
                for a in _multi_indices(d1.dim, s1):
                    val = _stable_derivative(F, u, a, step, floor=1e-12)
                    q = np.abs(val) * np.asarray(quasi_norm(d1, X1[sel]))
                    count += len(q)
                    j = int(np.argmax(q))
                    if q[j] > best:
                        best, arg = float(q[j]), [X1[sel][j].tolist(), bi, k2, list(a)]
    return ConditionReport("K3", best, arg, count, kern.C1, details={"order": s1})


# -- difference conditions ---------------------------------------------------------------


def _shell_of(d: Dilation, x) -> np.ndarray:
    return np.round(np.log(_rho(d, x)) / np.log(d.b)).astype(int)


def _h_ladders(d: Dilation, X: np.ndarray, rungs: int, direction: float) -> np.ndarray:
    """Increments ``h[i, t]`` with ``rho(h) ~ b^(l_i - 2 sigma - t)`` for points
    ``X[i]`` on shell ``l_i``; shape ``(len(X), rungs, n)``."""
    base = direction * (np.eye(d.dim)[0] @ d.ball_map.T) * (1 - 1e-9)
    ls = _shell_of(d, X)
    out = np.empty((len(X), rungs, d.dim))
    for i, l in enumerate(ls):
        for t in range(rungs):
            out[i, t] = d.power(int(l) - 2 * d.sigma - t) @ base
    return out


def _rho(d, x):
    return np.asarray(quasi_norm(d, x), dtype=float)


def _sample_pair(kern: KernelModel, spec: SampleSpec):
    d1, d2 = kern.dilations
    X1 = shell_points(d1, spec)
    X2 = shell_points(d2, SampleSpec(spec.shells, spec.per_shell, spec.seed + 1, spec.boundary))
    return X1, X2


def _argmax(q: np.ndarray):
    idx = np.unravel_index(int(np.argmax(q)), q.shape)
    return float(q[idx]), idx


def check_difference_conditions(kern: KernelModel, eps=None, spec: Optional[SampleSpec] = None,
                                rungs: int = 5, psi2: Optional[PolyBump] = None, k2: int = 0,
                                symmetric: bool = True) -> ConditionReport:
    """Constants of the first-variable, mixed and partial-kernel difference
    bounds (and, with ``symmetric``, of the same bounds with the variables
    interchanged).  ``details`` holds each constant separately.

    Increments satisfy ``rho(h) <= b^{-2 sigma} rho(x)``; the mixed bound uses
    the first three rungs of each ladder.
    """
    spec = spec or SampleSpec(shells=(-3, 3), per_shell=4)
    eps = tuple(kern.eps if eps is None else eps)
    for d, e in zip(kern.dilations, eps):
        if e > d.zeta_plus:
            warnings.warn(f"epsilon={e:.3g} exceeds log_b lambda_+ = {d.zeta_plus:.3g}: range effectively "
                          f"restricted, only the zero kernel satisfies such a bound", RuntimeWarning, stacklevel=2)
    details, best, arg, count = {}, 0.0, [], 0
    models = [("", kern, eps)]
    if symmetric:
        models.append(("swapped:", kern.swapped(), eps[::-1]))
    for tag, K, (e1, e2) in models:
        d1, d2 = K.dilations
        X1, X2 = _sample_pair(K, spec)
        r1, r2 = _rho(d1, X1), _rho(d2, X2)
        w1 = r1 ** (1 + e1)
        w2 = r2 ** (1 + e2)
        base = K(X1[:, None, :], X2[None, :, :])
        single = mixed = part = 0.0
        a_single = a_mixed = a_part = []
        pk = None
        if d2.dim == 1:
            pk = partial_kernel(K, psi2 or odd_bump(d2, max(K.N[1], 1)), k2)
            pbase = pk(X1)
        for sgn in (1.0, -1.0):
            H1 = _h_ladders(d1, X1, rungs, sgn)
            H2 = _h_ladders(d2, X2, 3, sgn)
            for t in range(rungs):
                X1h = X1 + H1[:, t]
                rh1 = _rho(d1, H1[:, t]) ** e1
                shifted = K(X1h[:, None, :], X2[None, :, :])
                q = np.abs(shifted - base) * (w1 / rh1)[:, None] * r2[None, :]
                count += q.size
                v, (i, j) = _argmax(q)
                if v > single:
                    single, a_single = v, [X1[i].tolist(), X2[j].tolist(), H1[i, t].tolist()]
                if pk is not None:
                    qp = np.abs(pk(X1h) - pbase) * w1 / rh1
                    count += qp.size
                    i = int(np.argmax(qp))
                    if qp[i] > part:
                        part, a_part = float(qp[i]), [X1[i].tolist(), H1[i, t].tolist()]
                if t >= 3:
                    continue
                for u in range(3):
                    X2h = X2 + H2[:, u]
                    rh2 = _rho(d2, H2[:, u]) ** e2
                    dd = (K(X1h[:, None, :], X2h[None, :, :]) - shifted
                          - K(X1[:, None, :], X2h[None, :, :]) + base)
                    q = np.abs(dd) * (w1 / rh1)[:, None] * (w2 / rh2)[None, :]
                    count += q.size
                    v, (i, j) = _argmax(q)
                    if v > mixed:
                        mixed, a_mixed = v, [X1[i].tolist(), X2[j].tolist(), H1[i, t].tolist(), H2[j, u].tolist()]
        details[tag + "single"] = single
        details[tag + "mixed"] = mixed
        if pk is not None:
            details[tag + "partial"] = part
        for name, v, a in (("single", single, a_single), ("mixed", mixed, a_mixed), ("partial", part, a_part)):
            if v > best:
                best, arg = v, [tag + name, a]
    details["eps"] = list(eps)
    return ConditionReport("Delta-conditions", best, arg, count, kern.C1, details=details)


def _jump_guard(ratios: np.ndarray, where, factor: float = 2.0, floor: float = 1e-12):
    """Ratios along a shrinking-``h`` ladder (axis 0) must not grow: a Holder
    bound holds near smooth points, while across a jump the ratio blows up
    like ``rho(h)^-eps``."""
    r = np.asarray(ratios, dtype=float)
    grows = (r[-1] > floor) & (r[-1] > factor * r[0]) & np.all(np.diff(r, axis=0) > 0, axis=0)
    if np.any(grows):
        idx = np.unravel_index(int(np.argmax(grows)), grows.shape) if grows.ndim else ()
        raise DerivativeUnstable("difference quotient grows as the increment shrinks (jump)", where(idx))


def _chart_values(K: KernelModel, X1, X2, H1, alpha1, alpha2, rungs_second=None):
    """Top-order chart derivatives ``d^alpha1 d^alpha2 K(A^l1 u, A^l2 v)`` at
    ``(u, v)`` and at the points shifted by ``A^-l1 h1`` (and ``A^-l2 h2``).

    ``H1`` has shape ``(S1, R, n)``; returns an array ``(R + 1, S1, S2)`` with
    rung 0 the unshifted point (and, with ``rungs_second``, a trailing axis
    over the second-variable rungs including the unshifted one).
    """
    d1, d2 = K.dilations
    n, m = d1.dim, d2.dim
    l1, l2 = _shell_of(d1, X1), _shell_of(d2, X2)
    step1, step2 = _chart_step(d1), _chart_step(d2)
    o1, w1 = _stencil(alpha1, step1)
    o2, w2 = _stencil(alpha2, step2)
    R = H1.shape[1]
    shifts1 = np.concatenate([np.zeros((len(X1), 1, n)), H1], axis=1)
    shifts2 = np.zeros((len(X2), 1, m)) if rungs_second is None else np.concatenate(
        [np.zeros((len(X2), 1, m)), rungs_second], axis=1)
    out = np.zeros((R + 1, len(X1), len(X2), shifts2.shape[1]))
    for L1 in np.unique(l1):
        s1 = l1 == L1
        M1, iM1 = d1.power(int(L1)), d1.power(-int(L1))
        # chart points (S1g, R+1, P1, n) mapped back to space
        u = (X1[s1][:, None, :] + shifts1[s1]) @ iM1.T
        z1 = (u[:, :, None, :] + o1[None, None, :, :]) @ M1.T
        for L2 in np.unique(l2):
            s2 = l2 == L2
            M2, iM2 = d2.power(int(L2)), d2.power(-int(L2))
            v = (X2[s2][:, None, :] + shifts2[s2]) @ iM2.T
            z2 = (v[:, :, None, :] + o2[None, None, :, :]) @ M2.T
            vals = K(z1[:, :, :, None, None, None, :], z2[None, None, None, :, :, :, :])
            # vals: (S1g, R+1, P1, S2g, R2+1, P2)
            der = np.einsum("arpbsq,p,q->rabs", vals, w1, w2)
            idx1 = np.nonzero(s1)[0]
            idx2 = np.nonzero(s2)[0]
            out[:, idx1[:, None], idx2[None, :], :] = der
    return out if rungs_second is not None else out[..., 0]


def check_lemma_32_conditions(kern: KernelModel, s1: int = 0, s2: int = 0, eps=None,
                              spec: Optional[SampleSpec] = None, rungs: int = 6,
                              psi2: Optional[PolyBump] = None, k2: int = 0) -> ConditionReport:
    """Constants of the three difference-of-top-derivative bounds on rescaled
    charts: first-variable (both roles), mixed, and partial-kernel.

    ``eps`` defaults to half of ``log_b lambda_-`` per factor.  A difference
    quotient that grows along the shrinking-increment ladder signals a jump
    and raises :class:`DerivativeUnstable` with the offending point.
    """
    spec = spec or SampleSpec(shells=(-3, 3), per_shell=4)
    if eps is None:
        eps = tuple(0.5 * d.zeta_minus for d in kern.dilations)
    details, best, arg, count = {}, 0.0, [], 0
    for tag, K, (e1, e2), (t1, t2) in (("", kern, eps, (s1, s2)), ("swapped:", kern.swapped(), eps[::-1], (s2, s1))):
        d1, d2 = K.dilations
        X1, X2 = _sample_pair(K, spec)
        r1, r2 = _rho(d1, X1), _rho(d2, X2)
        single = mixed = part = 0.0
        for sgn in (1.0, -1.0):
            H1 = _h_ladders(d1, X1, rungs, sgn)
            rh1 = _rho(d1, H1.reshape(-1, d1.dim)).reshape(len(X1), rungs).T ** e1  # (R, S1)
            for a1 in _multi_indices(d1.dim, t1):
                vals = _chart_values(K, X1, X2, H1, a1, (0,) * d2.dim)
                ratios = (np.abs(vals[1:] - vals[0]) * (r1 ** (1 + e1))[None, :, None] * r2[None, None, :]
                          / rh1[:, :, None])
                _jump_guard(ratios, lambda idx: [X1[idx[0]].tolist(), X2[idx[1]].tolist()])
                count += ratios.size
                v, (t, i, j) = _argmax(ratios)
                if v > single:
                    single = v
                    if v > best:
                        best, arg = v, [tag + "K1'", X1[i].tolist(), X2[j].tolist(), H1[i, t].tolist()]
                if tag:
                    continue
                H2 = _h_ladders(d2, X2, 3, sgn)
                rh2 = _rho(d2, H2.reshape(-1, d2.dim)).reshape(len(X2), 3).T ** e2  # (R2, S2)
                for a2 in _multi_indices(d2.dim, t2):
                    V = _chart_values(K, X1, X2, H1[:, :3], a1, a2, rungs_second=H2)
                    dd = V[1:, :, :, 1:] - V[1:, :, :, :1] - V[:1, :, :, 1:] + V[:1, :, :, :1]
                    q = (np.abs(dd) * (r1 ** (1 + e1))[None, :, None, None] * (r2 ** (1 + e2))[None, None, :, None]
                         / (rh1[:3, :, None, None] * rh2.T[None, None, :, :]))
                    count += q.size
                    v, (t, i, j, w) = _argmax(q)
                    if v > mixed:
                        mixed = v
                        if v > best:
                            best, arg = v, ["K1''", X1[i].tolist(), X2[j].tolist()]
        details[tag + "K1'"] = single
        if not tag:
            details["K1''"] = mixed
        if d2.dim == 1:
            pk = partial_kernel(K, psi2 or odd_bump(d2, max(K.N[1], 1)), k2)
            P = KernelModel((d1, d2), lambda a, b, pk=pk: pk(a) * np.ones(b.shape[:-1]), family="partial")
            one = np.zeros((1, d2.dim)) + shell_radius(d2, 0)
            for sgn in (1.0, -1.0):
                H1 = _h_ladders(d1, X1, rungs, sgn)
                rh1 = _rho(d1, H1.reshape(-1, d1.dim)).reshape(len(X1), rungs).T ** e1
                for a1 in _multi_indices(d1.dim, t1):
                    vals = _chart_values(P, X1, one, H1, a1, (0,) * d2.dim)[..., 0]
                    ratios = np.abs(vals[1:] - vals[0]) * (r1 ** (1 + e1))[None, :] / rh1
                    _jump_guard(ratios, lambda idx: [X1[idx[0]].tolist()])
                    count += ratios.size
                    part = max(part, float(ratios.max()))
            details[tag + "K3'"] = part
            if part > best:
                best, arg = part, [tag + "K3'"]
    details["eps"] = list(eps)
    return ConditionReport("Lemma-difference-conditions", best, arg, count, kern.C1, details=details)



# -- smoothed kernels ---------------------------------------------------------------


def smoothed_factor(kfun: Callable, phi: PolyBump, d: Dilation, k: int, y: np.ndarray, depth: int = 14) -> np.ndarray:
    """``(k * phi_k)(y) = PV int k(z) b^{-k} phi(A^{-k}(y - z)) dz`` at each ``y``."""
    _require_1d(d)
    a = float(d.matrix[0, 0]) ** k
    scale = d.b ** (-float(k))
    lo_s, hi_s = sorted(np.array(phi.support) * a)
    out = np.empty(len(y))
    for i, yi in enumerate(np.asarray(y, dtype=float).reshape(-1)):
        f = lambda z, yi=yi: scale * phi((yi - np.asarray(z)) / a)  # noqa: E731
        out[i] = pv_integral(kfun, f, d, yi - hi_s, yi - lo_s, depth).value
    return out


def smoothed_kernel_bound_check(kern: KernelModel, phis: Sequence[PolyBump], scales=(0, 0), j=(0, 0),
                                shells=(-4, 12), eps=None, points_per_shell: int = 2) -> ConditionReport:
    """Ratio of ``|K * phi_{k1,k2}|`` to the envelope
    ``prod b^{k eps} / (b^k + b^{-j} rho(x))^{1 + eps}`` at points on a range of
    shells in each variable, grouped by the four regimes
    ``l_i <= k_i + j_i + 4 sigma_i`` or not.  ``details["slopes"]`` holds the
    far-field log-decay slope per factor (fitted on the tail of the shell
    range where the regime is far) and ``details["regimes"]`` the sup ratio in
    each regime, ``"spread"`` the max/min of those, and ``"factor_spread"``
    the near/far sup ratio of each factor (the four-regime spread of a
    separable kernel is the product of the two).  Requires a separable kernel.
    """
    if kern.factors is None:
        raise NotImplementedError("smoothed kernels are evaluated for separable kernels")
    eps = tuple(kern.eps if eps is None else eps)
    vals, rhos, ells, thresholds = [], [], [], []
    for i, (d, kf, phi) in enumerate(zip(kern.dilations, kern.factors, phis)):
        _require_1d(d)
        w0 = _half_width(d)
        fr = (np.arange(points_per_shell) / points_per_shell) * (abs(float(d.matrix[0, 0])) - 1) + 1
        ls = np.arange(shells[0], shells[1] + 1)
        y = np.concatenate([w0 * abs(float(d.matrix[0, 0])) ** l * fr for l in ls])
        lab = np.repeat(ls, points_per_shell)
        vals.append(smoothed_factor(kf, phi, d, scales[i], y))
        rhos.append(_rho(d, y[:, None]))
        ells.append(lab)
        thresholds.append(scales[i] + j[i] + 4 * d.sigma)
    env = []
    for i, d in enumerate(kern.dilations):
        b = d.b
        env.append(b ** (scales[i] * eps[i]) / (b ** scales[i] + b ** (-j[i]) * rhos[i]) ** (1 + eps[i]))
    ratio = (np.abs(vals[0])[:, None] * np.abs(vals[1])[None, :]) / (env[0][:, None] * env[1][None, :])
    regimes = {}
    for f1 in (False, True):
        for f2 in (False, True):
            m1 = (ells[0] > thresholds[0]) == f1
            m2 = (ells[1] > thresholds[1]) == f2
            key = f"{'far' if f1 else 'near'}-{'far' if f2 else 'near'}"
            regimes[key] = float(ratio[np.ix_(m1, m2)].max()) if m1.any() and m2.any() else None
    slopes = []
    for i, d in enumerate(kern.dilations):
        far = ells[i] > thresholds[i] + 1
        v = np.abs(vals[i])
        good = far & (v > 0)
        # one sample per shell at a fixed relative position keeps the fit self-similar
        first = np.zeros_like(good)
        first[::points_per_shell] = True
        sel = good & first
        if sel.sum() >= 2:
            slope = float(np.polyfit(ells[i][sel], np.log(v[sel]), 1)[0])
        else:
            slope = float("nan")
        slopes.append(slope)
    worst_i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    finite = [v for v in regimes.values() if v]
    factor_spread = []
    for i, d in enumerate(kern.dilations):
        r = np.abs(vals[i]) / env[i]
        near, far = r[ells[i] <= thresholds[i]], r[ells[i] > thresholds[i]]
        factor_spread.append(float(near.max() / far.max()) if near.size and far.size and far.max() > 0 else None)
    details = {
        "regimes": regimes,
        "spread": max(finite) / min(finite) if finite and min(finite) > 0 else None,
        "factor_spread": factor_spread,
        "slopes": slopes,
        "expected_slopes": [-(1 + e) * np.log(d.b) for e, d in zip(eps, kern.dilations)],
        "eps": list(eps),
        "thresholds": thresholds,
    }
    return ConditionReport("smoothed-kernel", float(ratio.max()),
                           [int(ells[0][worst_i[0]]), int(ells[1][worst_i[1]])], int(ratio.size), None,
                           details=details)


# -- application ----------------------------------------------------------------------


def _cell_average_1d(kfun: Callable, axis: np.ndarray, h: float, npts: int = 4) -> np.ndarray:
    x, w = _gauss(npts)
    z = axis[:, None] + 0.5 * h * x[None, :]
    vals = kfun(z[..., None])
    return vals @ w * 0.5


def sampled_kernel_grid(kern: KernelModel, grid: Grid, mode: str = "midpoint", delta=(0.0, 0.0), npts: int = 4) -> np.ndarray:
    """Kernel quadrature weights (divided by the cell volume) on a product grid,
    zero on the axes and on nodes with ``rho_i(y_i) < delta_i``.

    ``mode="midpoint"`` samples the kernel at nodes with every offset odd
    and doubles the weight per axis: the midpoint rule on the coarse lattice
    for the symmetrized integrand, second order and, for the Hilbert kernel,
    exact below the Nyquist frequency.  ``mode="cell"`` averages the kernel over each grid cell with Gauss points
    (factor by factor for separable kernels); ``mode="node"`` samples it at
    the nodes.
    """
    if grid.staggered:
        raise ValueError("kernel sampling needs an unstaggered grid")
    d1, d2 = kern.dilations
    n = d1.dim
    g1, g2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    if mode not in ("midpoint", "cell", "node"):
        raise ValueError("mode must be 'midpoint', 'cell' or 'node'")
    if kern.factors is not None and n == 1 and d2.dim == 1:
        a1, a2 = grid.axis(0), grid.axis(1)
        if mode == "cell":
            k1 = _cell_average_1d(kern.factors[0], a1, grid.h[0], npts)
            k2 = _cell_average_1d(kern.factors[1], a2, grid.h[1], npts)
        else:
            k1 = kern.factors[0](a1[:, None])
            k2 = kern.factors[1](a2[:, None])
        K = np.outer(k1, k2)
    else:
        P1 = g1.points().reshape(-1, n)
        P2 = g2.points().reshape(-1, d2.dim)
        if mode == "cell":
            x, w = _gauss(npts)
            offs1 = np.stack(np.meshgrid(*([x] * n), indexing="ij"), -1).reshape(-1, n) * 0.5 * np.array(g1.h)
            offs2 = np.stack(np.meshgrid(*([x] * d2.dim), indexing="ij"), -1).reshape(-1, d2.dim) * 0.5 * np.array(g2.h)
            w1 = np.prod(np.stack(np.meshgrid(*([w / 2] * n), indexing="ij"), -1).reshape(-1, n), axis=1)
            w2 = np.prod(np.stack(np.meshgrid(*([w / 2] * d2.dim), indexing="ij"), -1).reshape(-1, d2.dim), axis=1)
            K = np.zeros((len(P1), len(P2)))
            for a, wa in zip(offs1, w1):
                for c, wc in zip(offs2, w2):
                    K += wa * wc * kern((P1 + a)[:, None, :], (P2 + c)[None, :, :])
        else:
            K = kern(P1[:, None, :], P2[None, :, :])
        K = K.reshape(grid.shape)
    K = np.asarray(K, dtype=float).reshape(grid.shape)
    if mode == "midpoint":
        # weight 2 per axis on odd offsets from the origin, 0 on even ones
        for ax in range(grid.dim):
            off = np.arange(grid.N[ax]) - grid.origin_index[ax]
            shape = [1] * grid.dim
            shape[ax] = -1
            K = K * np.where(off % 2 == 1, 2.0, 0.0).reshape(shape)
    o1 = g1.origin_index
    o2 = g2.origin_index
    K[o1 + (slice(None),) * d2.dim] = 0.0
    K[(slice(None),) * n + o2] = 0.0
    if delta[0] > 0:
        K[np.asarray(quasi_norm(d1, g1.points())) < delta[0]] = 0.0
    if delta[1] > 0:
        K[(slice(None),) * n + (np.asarray(quasi_norm(d2, g2.points())) < delta[1],)] = 0.0
    return K


@dataclass
class ApplyResult:
    field: GridFunction
    gap: float


def _doubled(grid: Grid) -> Grid:
    return Grid(tuple(2 * n for n in grid.N), tuple(2 * L for L in grid.L), grid.staggered)


def _linear_convolve(f: np.ndarray, K: np.ndarray, grid: Grid) -> np.ndarray:
    """Non-periodic ``sum_y K(y) f(x - y) h^n`` on ``grid`` with ``K`` sampled on
    the doubled grid (same spacing, twice the box)."""
    from scipy.signal import fftconvolve

    full = fftconvolve(f, K, mode="full")
    sl = tuple(slice(n, 2 * n) for n in grid.N)
    return full[sl] * grid.cell_volume


def apply_pasio(kern: KernelModel, f: GridFunction, delta=(0.0, 0.0), mode: str = "midpoint", tol: float = 0.1,
                kernel_grid: Optional[np.ndarray] = None, boundary: str = "periodic") -> ApplyResult:
    """``Tf = int_{rho_i(y_i) >= delta_i} K(y) f(x - y) dy`` by FFT convolution
    with the truncated sampled kernel.

    ``boundary="periodic"`` convolves on the periodic box; ``"linear"``
    samples the kernel on the doubled box and treats ``f`` as zero outside
    the grid, which avoids the kernel's jump at the box edge.  When a
    truncation radius is positive the result is recomputed with the radii
    divided by ``b_i`` and the relative L^2 gap is returned; a gap above
    ``tol`` raises :class:`PVNotConvergent`.
    """
    if boundary not in ("periodic", "linear"):
        raise ValueError("boundary must be 'periodic' or 'linear'")
    grid = f.grid

    def run(dl, Kg=None):
        if boundary == "periodic":
            Kg = sampled_kernel_grid(kern, grid, mode, dl) if Kg is None else Kg
            return convolve(f, GridFunction(grid, Kg, "space")).samples
        Kg = sampled_kernel_grid(kern, _doubled(grid), mode, dl) if Kg is None else Kg
        return _linear_convolve(f.samples, Kg, grid)

    out = run(delta, kernel_grid)
    gap = 0.0
    if any(x > 0 for x in delta):
        finer = tuple(x / d.b for x, d in zip(delta, kern.dilations))
        out2 = run(finer)
        den = np.linalg.norm(out2)
        gap = float(np.linalg.norm(out - out2) / den) if den > 0 else 0.0
        if gap > tol:
            raise PVNotConvergent(f"truncated operators at delta and delta/b differ by {gap:.3f} in L2", [gap])
    Tf = GridFunction(grid, out, "space", {"operator": kern.family, "delta": list(delta), "mode": mode,
                                           "boundary": boundary})
    return ApplyResult(Tf, gap)


def factor_weights(kfun: Callable, grid: Grid, mode: str = "midpoint", npts: int = 4) -> np.ndarray:
    """One-variable kernel quadrature weights on a 1-D grid (origin zeroed)."""
    ax = grid.axis(0)
    if mode == "cell":
        k = _cell_average_1d(kfun, ax, grid.h[0], npts)
    else:
        k = kfun(ax[:, None])
    off = np.arange(grid.N[0]) - grid.origin_index[0]
    if mode == "midpoint":
        k = np.where(off % 2 == 1, 2.0 * k, 0.0)
    return np.where(off == 0, 0.0, k)


def apply_factor(kfun: Callable, f: GridFunction, mode: str = "midpoint", boundary: str = "linear") -> GridFunction:
    """One-variable operator ``x -> int k(y) f(x - y) dy`` on a 1-D grid; with
    a separable kernel the product operator is the tensor product of these."""
    grid = f.grid
    if boundary == "linear":
        out = _linear_convolve(f.samples, factor_weights(kfun, _doubled(grid), mode), grid)
    else:
        out = convolve(f, GridFunction(grid, factor_weights(kfun, grid, mode), "space")).samples
    return GridFunction(grid, out, "space", {"mode": mode, "boundary": boundary})


def double_hilbert_multiplier(grid: Grid, factor: float = np.pi ** 2 / 4) -> np.ndarray:
    """Fourier multiplier of ``factor / (pi^2 x1 x2)`` (``factor`` times the
    double Hilbert transform) on a 1x1 product grid."""
    xi = grid.freq_points()
    return -factor * np.sign(xi[..., 0]) * np.sign(xi[..., 1])


def dense_apply(kern: KernelModel, f: GridFunction, mode: str = "node") -> np.ndarray:
    """Direct O(N^2) periodic sum ``sum_y K(y) f(x - y) h^n`` (small grids only)."""
    grid = f.grid
    Kg = sampled_kernel_grid(kern, grid, mode)
    N = grid.shape
    o = np.array(grid.origin_index)
    out = np.zeros(N)
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in N], indexing="ij"), -1).reshape(-1, len(N))
    for x in idx:
        # y index j corresponds to offset j - o; x - y wraps periodically
        src = (x[None, :] - (idx - o)) % np.array(N)
        out[tuple(x)] = np.sum(Kg[tuple(idx.T)] * f.samples[tuple(src.T)]) * grid.cell_volume
    return out
