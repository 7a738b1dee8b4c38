"""Weight fields and sampled Muckenhoupt constants.

The estimators here take finite maxima over sampled translates and scales, so
they are lower bounds for the true constants.  Whether a weight belongs to a
class is judged by how the estimate behaves as the scale window grows.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dilation import Dilation, ball_membership, quasi_norm, shell_index
from .errors import EmptyWindow, NonPositive, Unstable
from .grid import Grid, GridFunction


@dataclass
class WeightField:
    """Positive weight sampled at grid nodes.

    ``cell_power``, when present, maps an exponent ``t`` to the cell averages
    of ``w^t``; the Muckenhoupt estimators integrate through it instead of
    point-sampling, which matters for weights with a singularity at a node
    or cell corner.  ``factor_power`` plays the same part for a tensor
    product weight: one ``(cell_power, node_values)`` pair per factor, so a
    slice is the cell means in the free factor times the frozen node value.
    """

    samples: GridFunction
    dilations: tuple
    analytic_form: Optional[dict] = None
    cell_power: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False, compare=False)
    factor_power: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.dilations, tuple):
            self.dilations = (self.dilations,)
        if not np.all(self.samples.samples > 0):
            raise NonPositive("weight samples must be strictly positive")

    @property
    def grid(self) -> Grid:
        return self.samples.grid

    @property
    def values(self) -> np.ndarray:
        return self.samples.samples

    def scaled(self, factor: float) -> "WeightField":
        cp = None
        if self.cell_power is not None:
            base = self.cell_power
            cp = lambda t: base(t) * factor ** t  # noqa: E731
        fp = None
        if self.factor_power is not None:
            (p1, v1), (p2, v2) = self.factor_power
            fp = ((lambda t: p1(t) * factor ** t), v1 * factor), (p2, v2)
        return WeightField(self.samples.like(self.values * factor), self.dilations, self.analytic_form, cp, fp)

    def power_means(self, t: float) -> np.ndarray:
        """Cell averages of ``w^t`` (node values of ``w^t`` without a hook)."""
        if self.cell_power is None:
            return self.values ** t
        return self.cell_power(t)


@dataclass
class ApEstimate:
    p: float
    value: float
    window: tuple
    translates: int
    trend: list = field(default_factory=list)
    per_scale: dict = field(default_factory=dict)
    skipped: int = 0
    profile: Optional[list] = None

    def __float__(self):
        return float(self.value)


@dataclass
class CriticalIndexEstimate:
    value: float
    flag: str
    stable: dict

    def __float__(self):
        return float(self.value)


# -- construction -----------------------------------------------------------


def _power_values(d: Dilation, pts: np.ndarray, alpha: float, grid: Grid) -> np.ndarray:
    rho = np.asarray(quasi_norm(d, pts), dtype=float)
    vals = np.empty_like(rho)
    pos = rho > 0
    vals[pos] = rho[pos] ** alpha
    if (~pos).any():
        # the origin node holds the midpoint-rule average of rho^alpha over its cell
        sub = 64 if d.dim == 1 else 16
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        h = np.asarray(grid.h[: d.dim])
        cell = np.stack(np.meshgrid(*([offs] * d.dim), indexing="ij"), -1).reshape(-1, d.dim) * h
        vals[~pos] = np.mean(np.asarray(quasi_norm(d, cell)) ** alpha)
    return vals


def _origin_cells(grid: Grid, n: int) -> np.ndarray:
    """Boolean mask of the cells whose closure contains the origin."""
    axes = [np.abs(grid.axis(i)) <= 0.5 * grid.h[i] * (1 + 1e-9) for i in range(n)]
    return np.logical_and.reduce(np.meshgrid(*axes, indexing="ij"))


def _inner_ball_level(d: Dilation, size: float) -> int:
    """Largest ``m`` with every axis extent of ``B_m`` at most ``size``."""
    m = 0
    ext = lambda k: np.sqrt(d.c * np.diag(np.linalg.inv(d.power(-k).T @ d.P @ d.power(-k)))).max()  # noqa: E731
    while ext(m) > size:
        m -= 1
    while ext(m + 1) <= size:
        m += 1
    return m


def power_cell_means(d: Dilation, grid: Grid, sub: Optional[int] = None, fine: Optional[int] = None) -> Callable:
    """Integrator ``gamma -> cell averages of rho^gamma`` over ``grid``.

    Ordinary cells use a ``sub^n`` midpoint rule.  A cell touching the origin
    is split into a small ball ``B_m`` and its complement: the complement uses
    a ``fine^n`` lattice and the ball the shell sum
    ``(b - 1) b^{m(gamma+1)} / (b^{gamma+1} - 1)``, which is infinite for
    ``gamma <= -1``.  The share of ``B_m`` in the cell is measured on the
    lattice at level ``m`` and assumed for every smaller ball (exact when the
    balls are symmetric under coordinate reflections).
    """
    n = d.dim
    if grid.dim != n:
        raise ValueError("grid and dilation dimensions differ")
    sub = sub or {1: 16, 2: 4}.get(n, 2)
    fine = fine or {1: 4096, 2: 64}.get(n, 16)
    h = np.asarray(grid.h)
    vol = float(np.prod(h))
    log_b = np.log(d.b)

    def log_rho(x):
        return shell_index(d, x).astype(float) * log_b

    offs1 = (np.arange(sub) + 0.5) / sub - 0.5
    offs = np.stack(np.meshgrid(*([offs1] * n), indexing="ij"), -1).reshape(-1, n) * h
    pts = grid.points()
    logr = log_rho((pts[..., None, :] + offs).reshape(-1, n)).reshape(grid.shape + (len(offs),))
    m = _inner_ball_level(d, 0.25 * h.min())
    lat1 = (np.arange(fine) + 0.5) / fine - 0.5
    lat = np.stack(np.meshgrid(*([lat1] * n), indexing="ij"), -1).reshape(-1, n) * h
    special = []
    for idx in zip(*np.nonzero(_origin_cells(grid, n))):
        x = pts[idx] + lat
        inner = np.atleast_1d(ball_membership(d, x, m))
        share = inner.sum() * vol / fine ** n / d.b ** m
        special.append((idx, log_rho(x[~inner]), share))

    def means(gamma: float) -> np.ndarray:
        out = np.exp(gamma * logr).mean(axis=-1)
        x = d.b ** (gamma + 1.0)
        ball = (d.b - 1.0) * d.b ** (m * (gamma + 1.0)) / (x - 1.0) if x > 1.0 else np.inf
        for idx, lr, share in special:
            outer = np.exp(gamma * lr).sum() * vol / fine ** n
            out[idx] = (outer + share * ball) / vol
        return out

    return means


def power_weight(d: Dilation, grid: Grid, alpha: float) -> WeightField:
    """``rho(x)^alpha`` sampled on ``grid``.

    On an unstaggered grid the origin sample (where ``rho = 0``) is replaced by
    the cell average so the field stays positive.  The field carries exact
    cell averages of its powers for the Muckenhoupt estimators.
    """
    pts = grid.points()
    vals = _power_values(d, pts, alpha, grid)
    gf = GridFunction(grid, vals, "space", {"weight": f"power:alpha={alpha}"})
    cells = _lazy_cells(d, grid)
    return WeightField(gf, (d,), {"family": "power", "alpha": float(alpha)},
                       lambda t: cells()(alpha * t))


_CELL_CACHE: "OrderedDict[tuple, Callable]" = OrderedDict()


def _lazy_cells(d: Dilation, grid: Grid) -> Callable:
    """Deferred ``power_cell_means(d, grid)``, shared between weights on the
    same dilation and grid (a few recent integrators are kept)."""
    key = (d.matrix.tobytes(), d.P.tobytes(), float(d.c), grid)

    def get():
        if key not in _CELL_CACHE:
            _CELL_CACHE[key] = power_cell_means(d, grid)
            while len(_CELL_CACHE) > 4:
                _CELL_CACHE.popitem(last=False)
        _CELL_CACHE.move_to_end(key)
        return _CELL_CACHE[key]

    return get


def constant_weight(grid: Grid, dilations, value: float = 1.0) -> WeightField:
    gf = GridFunction(grid, np.full(grid.shape, float(value)), "space", {"weight": "one"})
    return WeightField(gf, tuple(np.atleast_1d(dilations)) if not isinstance(dilations, Dilation) else (dilations,),
                       {"family": "one"})


def product_power_weight(d1: Dilation, d2: Dilation, grid: Grid, alpha1: float, alpha2: float,
                         combine: str = "product") -> WeightField:
    """``rho1(x1)^a1 * rho2(x2)^a2`` (or the sum of the two factors)."""
    n = d1.dim
    g1, g2 = grid.sub(range(n)), grid.sub(range(n, grid.dim))
    w1 = _power_values(d1, g1.points(), alpha1, g1)
    w2 = _power_values(d2, g2.points(), alpha2, g2)
    w1 = w1.reshape(w1.shape + (1,) * d2.dim)
    if combine == "product":
        vals = w1 * w2
    elif combine == "sum":
        vals = w1 + w2
    else:
        raise ValueError(f"unknown combine mode {combine!r}")
    tag = f"{combine}-power:alpha1={alpha1},alpha2={alpha2}"
    gf = GridFunction(grid, np.broadcast_to(vals, grid.shape).copy(), "space", {"weight": tag})
    factors = None
    if combine == "product":
        c1, c2 = _lazy_cells(d1, g1), _lazy_cells(d2, g2)
        factors = ((lambda t: c1()(alpha1 * t), w1.reshape(g1.shape)), (lambda t: c2()(alpha2 * t), w2))
    return WeightField(gf, (d1, d2), {"family": f"{combine}-power", "alpha1": alpha1, "alpha2": alpha2},
                       factor_power=factors)


def parse_weight_spec(spec: str):
    """``"power:alpha=0.5"`` -> ``("power", {"alpha": 0.5})``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        params[key.strip()] = float(val)
    return name.strip(), params


def weight_from_spec(spec: str, dilations, grid: Grid) -> WeightField:
    name, params = parse_weight_spec(spec)
    dils = dilations if isinstance(dilations, tuple) else (dilations,)
    if name == "one":
        return constant_weight(grid, dils)
    if name == "power":
        if len(dils) == 1:
            return power_weight(dils[0], grid, params.get("alpha", 0.0))
        a = params.get("alpha", 0.0)
        return product_power_weight(dils[0], dils[1], grid, params.get("alpha1", a), params.get("alpha2", a))
    if name in ("product-power", "sum-power"):
        return product_power_weight(dils[0], dils[1], grid, params.get("alpha1", 0.0),
                                    params.get("alpha2", 0.0), combine=name.split("-")[0])
    raise ValueError(f"unknown weight family {name!r}")


# -- A_p estimation ---------------------------------------------------------


def ball_stencil(d: Dilation, k: int, h: Sequence[float]) -> np.ndarray:
    """Integer node offsets ``o`` with ``o*h`` in ``B_k`` (always contains 0)."""
    M = d.power(-k).T @ d.P @ d.power(-k)
    ext = np.sqrt(d.c * np.diag(np.linalg.inv(M)))
    h = np.asarray(h, dtype=float)
    half = np.floor(ext / h).astype(int)
    ranges = [np.arange(-m, m + 1) for m in half]
    offs = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, d.dim)
    y = offs * h
    inside = np.einsum("ni,ij,nj->n", y, M, y) < d.c
    inside |= ~np.any(offs, axis=1)
    return offs[inside]


def _translate_nodes(grid: Grid, count: int) -> np.ndarray:
    """``count`` node indices: the node nearest the origin first, then nodes
    at geometrically growing offsets ``m 2^j`` (``m`` in 1, 3/2) along the
    coordinate axes and the main diagonal, and any remaining budget spread
    uniformly over the central half box.

    The geometric set makes the sampled balls of every scale meet the origin
    at the same relative positions, which keeps the per-scale maxima of a
    homogeneous weight self-similar across scales.
    """
    origin = np.array(grid.origin_index)
    if count <= 1:
        return origin[None, :]
    n = grid.dim
    dirs = [np.eye(n, dtype=int)[i] for i in range(n)]
    if n > 1:
        dirs.append(np.ones(n, dtype=int))
    max_j = int(np.log2(max(2, min(grid.N) // 4)))
    cand = []
    for m in (1.0, 1.5):
        for j in range(max_j + 1):
            for v in dirs:
                for sgn in (1, -1):
                    cand.append(sgn * int(m * 2 ** j) * v)
    budget = count - 1
    if len(cand) > budget:
        # keep whole scale sweeps: thin out the 3/2 multiples first, then directions
        cand = cand[:budget]
    picked = [origin] + [origin + c for c in cand]
    n_uni = count - len(picked)
    if n_uni > 0:
        per_axis = max(2, int(np.ceil(n_uni ** (1.0 / n))))
        axes = []
        for i in range(n):
            q = grid.N[i] // 4
            axes.append(np.unique(np.linspace(grid.N[i] // 2 - q, grid.N[i] // 2 + q, per_axis).round().astype(int)))
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
        picked.extend(nodes[:n_uni])
    shape = np.array(grid.N)
    out = []
    seen = set()
    for node in picked:
        key = tuple(int(t) for t in node)
        if key in seen or np.any(node < 0) or np.any(node >= shape):
            continue
        seen.add(key)
        out.append(node)
    return np.array(out, dtype=int)


def _estimator_arrays(w: WeightField, p: float) -> tuple:
    """``(w, sigma)`` cell data for the ball averages: cell means of ``w`` and
    of ``w^{-1/(p-1)}``; node values of ``w`` and ``1/w`` when ``p = 1``."""
    if p == 1:
        return w.values, 1.0 / w.values
    return w.power_means(1.0), w.power_means(-1.0 / (p - 1.0))


def _one_parameter(values: np.ndarray, dual: np.ndarray, grid: Grid, d: Dilation, p: float, k_range,
                   translates: int):
    """Per-scale maxima over one translate set shared by every scale.

    ``values`` feeds the average of ``w``; ``dual`` holds ``w^{-1/(p-1)}``
    (or ``1/w`` for ``p = 1``) so that callers can pass exact cell means.

    Translates whose largest ball leaves the grid are dropped for all scales
    (each dropped ``(x, k)`` pair is counted in ``skipped``), so the per-scale
    sequence compares like with like.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if k_range[0] > k_range[1]:
        raise EmptyWindow(f"empty scale window {tuple(k_range)}")
    centers = _translate_nodes(grid, translates)
    shape = np.array(values.shape)
    scales = range(k_range[0], k_range[1] + 1)
    stencils = {k: ball_stencil(d, k, grid.h) for k in scales}
    top = stencils[k_range[1]]
    ok = np.all((centers + top.min(axis=0) >= 0) & (centers + top.max(axis=0) < shape), axis=1)
    if not ok.any():
        raise EmptyWindow(f"no translate keeps x + B_{k_range[1]} inside the grid")
    centers = centers[ok]
    skipped = int((~ok).sum()) * len(scales)
    per_scale = {}
    for k in scales:
        offs = stencils[k]
        idx = centers[:, None, :] + offs[None, :, :]
        at = tuple(idx[..., i] for i in range(d.dim))
        avg_w = values[at].mean(axis=1)
        if p == 1:
            other = dual[at].max(axis=1)
        else:
            other = dual[at].mean(axis=1) ** (p - 1.0)
        with np.errstate(invalid="ignore"):
            per_scale[k] = float(np.max(avg_w * other))
    trend = np.maximum.accumulate([per_scale[k] for k in scales]).tolist()
    return per_scale, trend, skipped


def ap_constant_estimate(w: WeightField, p: float, k_range, translates: int = 64) -> ApEstimate:
    """Sampled lower bound for the one-parameter constant ``C_A(w)``.

    Averages over ``x + B_k`` are node means over the rasterized ball, so a
    constant weight gives exactly 1.
    """
    if not np.all(w.values > 0):
        raise NonPositive("weight samples must be strictly positive")
    d = w.dilations[0]
    if d.dim != w.grid.dim:
        raise ValueError("one-parameter estimate needs a weight on R^n with the dilation's dimension")
    per_scale, trend, skipped = _one_parameter(*_estimator_arrays(w, float(p)), w.grid, d, float(p),
                                               tuple(k_range), translates)
    return ApEstimate(float(p), trend[-1], tuple(k_range), translates, trend, per_scale, skipped)


def _slices(w: WeightField, factor: int, count: int, p: float):
    """Yield ``(slice_index, (w_data, dual_data))`` for slices of the product
    weight with the other factor's variable frozen at ``count`` sampled
    nodes."""
    n1 = w.dilations[0].dim
    grid = w.grid
    frozen = grid.sub(range(n1, grid.dim)) if factor == 0 else grid.sub(range(n1))
    for node in _translate_nodes(frozen, count):
        node = tuple(int(t) for t in node)
        if w.factor_power is not None and p > 1:
            cells, _ = w.factor_power[factor]
            c = w.factor_power[1 - factor][1][node]
            t = -1.0 / (p - 1.0)
            yield node, (cells(1.0) * c, cells(t) * c ** t)
            continue
        # vary x1 (first n1 axes) and freeze x2, or the reverse
        vals = w.values[(Ellipsis,) + node] if factor == 0 else w.values[node]
        vals = np.ascontiguousarray(vals)
        yield node, (vals, 1.0 / vals if p == 1 else vals ** (-1.0 / (p - 1.0)))


def product_ap_estimate(w: WeightField, p: float, k_ranges, translates: int = 32, slices: int = 16) -> ApEstimate:
    """Sampled ``C_{vec A}(w)``: the max over frozen slices of the one-parameter
    estimate in the other factor.  ``profile`` lists every slice estimate."""
    if len(w.dilations) != 2:
        raise ValueError("product estimate needs a pair of dilations")
    if not np.all(w.values > 0):
        raise NonPositive("weight samples must be strictly positive")
    d1, d2 = w.dilations
    n1 = d1.dim
    g1, g2 = w.grid.sub(range(n1)), w.grid.sub(range(n1, w.grid.dim))
    k_ranges = tuple(tuple(r) for r in k_ranges) if np.ndim(k_ranges) == 2 else (tuple(k_ranges),) * 2
    profile = []
    best = None
    skipped = 0
    for factor, (d, g, kr) in enumerate(((d1, g1, k_ranges[0]), (d2, g2, k_ranges[1]))):
        # factor 0: slices w(., x2) estimated with A_1; factor 1: w(x1, .) with A_2
        for node, arrs in _slices(w, factor, slices, float(p)):
            per_scale, trend, sk = _one_parameter(*arrs, g, d, float(p), kr, translates)
            skipped += sk
            profile.append({"factor": factor + 1, "frozen_node": list(map(int, node)), "value": trend[-1]})
            if best is None or trend[-1] > best[0]:
                best = (trend[-1], trend, per_scale)
    return ApEstimate(float(p), best[0], k_ranges, translates, best[1], best[2], skipped, profile)


def is_stable(trend: Sequence[float], enlarged: Sequence[float], rel_tol: float = 0.10,
              max_ratio: float = 0.99) -> bool:
    """Stability of an estimate under window enlargement.

    Stable when the enlarged window moves the estimate by less than
    ``rel_tol``, or when the increments of the enlarged trend shrink
    geometrically: the median ratio of successive increments over the top
    third of the window is below ``max_ratio``.  The second test matters near
    the edge of a class, where the sampled averages converge to a finite
    limit but only slowly as more cells resolve the singularity.
    """
    base, big = trend[-1], enlarged[-1]
    if not (np.isfinite(base) and np.isfinite(big)):
        return False
    if abs(big - base) <= rel_tol * abs(base):
        return True
    inc = np.diff(np.asarray(enlarged, dtype=float))
    tail = inc[-max(4, len(inc) // 3):]
    if np.all(tail <= 1e-14 * abs(big)):
        return True
    pos = tail > 0
    if pos.sum() < 3 or not pos[-1]:
        return bool(pos.sum() == 0)
    t = tail[pos]
    return bool(np.median(t[1:] / t[:-1]) < max_ratio)


def critical_index_estimate(w: WeightField, p_grid: Sequence[float], k_range=(-4, 4),
                            enlarge: int = 2, translates: int = 32) -> CriticalIndexEstimate:
    """Smallest ``p`` in ``p_grid`` whose estimate is stable when the scale
    window is enlarged by ``enlarge``; an upper bracket for ``q_w``."""
    p_grid = list(p_grid)
    if any(p <= 1 for p in p_grid) or p_grid != sorted(p_grid):
        raise ValueError("p_grid must be sorted with every entry > 1")
    big = (k_range[0] * enlarge, k_range[1] * enlarge)
    stable = {}
    for p in p_grid:
        if len(w.dilations) == 2:
            e0 = product_ap_estimate(w, p, k_range, translates)
            e1 = product_ap_estimate(w, p, big, translates)
        else:
            e0 = ap_constant_estimate(w, p, k_range, translates)
            e1 = ap_constant_estimate(w, p, big, translates)
        stable[p] = is_stable(e0.trend, e1.trend)
    good = [p for p in p_grid if stable[p]]
    if not good:
        raise Unstable("no exponent in the grid gives a stable A_p estimate")
    flag = "all-stable" if all(stable.values()) else "upper-bracket"
    return CriticalIndexEstimate(good[0], flag, stable)
