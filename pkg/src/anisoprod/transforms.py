"""Dilated kernels, periodic convolutions and the multi-scale square functions.

All convolutions are circular (FFT based) and carry the cell volume so they
approximate integrals.  Scale loops run in a fixed increasing order, so sums
are bit-for-bit reproducible.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import ndimage

from .calderon import CalderonPair
from .dilation import Dilation, ball_membership
from .errors import GridMismatch, WindowOutsideCertifiedRange
from .grid import Grid, GridFunction


class ResolutionWarning(UserWarning):
    """A dilate compresses features below the grid spacing."""


# -- basic operations -----------------------------------------------------------


def _same_grid(*fs: GridFunction) -> Grid:
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise GridMismatch(f"grids differ: {g} vs {f.grid}")
    return g


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Periodic convolution ``(f * g)(x) = sum_y f(y) g(x - y) h^n``."""
    grid = _same_grid(f, g)
    F = np.fft.fftn(np.fft.ifftshift(f.samples))
    G = np.fft.fftn(np.fft.ifftshift(g.samples))
    out = np.fft.fftshift(np.fft.ifftn(F * G)) * grid.cell_volume
    if not (np.iscomplexobj(f.samples) or np.iscomplexobj(g.samples)):
        out = out.real
    return GridFunction(grid, out, "space")


def discrete_delta(grid: Grid) -> GridFunction:
    """Grid delta: ``1/h^n`` at the origin node, zero elsewhere."""
    data = np.zeros(grid.shape)
    data[grid.origin_index] = 1.0 / grid.cell_volume
    return GridFunction(grid, data, "space")


def dilate_kernel(phi: GridFunction, d: Dilation, k: int) -> GridFunction:
    """``phi_k(x) = b^{-k} phi(A^{-k} x)`` on ``phi``'s grid.

    Uses ``phi.evaluator`` when present; otherwise resamples with cubic
    splines (zero outside the box).
    """
    if k == 0:
        return phi.copy()
    grid = phi.grid
    pts = grid.points()
    y = pts @ d.power(-k).T
    scale = d.b ** (-float(k))
    if phi.evaluator is not None:
        vals = phi.evaluator(y)
    else:
        if np.linalg.svd(d.power(k), compute_uv=False).min() < 0.25:
            warnings.warn(f"A^{k} compresses features below the grid spacing", ResolutionWarning, stacklevel=2)
        coords = [(y[..., i] - grid.axis(i)[0]) / grid.h[i] for i in range(grid.dim)]
        vals = ndimage.map_coordinates(phi.samples, coords, order=3, mode="constant", cval=0.0)
    out = GridFunction(grid, scale * np.asarray(vals), "space", dict(phi.meta, scale=k))
    if phi.evaluator is not None:
        ev = phi.evaluator
        out.evaluator = lambda x, ev=ev, M=d.power(-k), s=scale: s * ev(np.asarray(x) @ M.T)
    return out


def lebesgue_norm(f, p: float, w=None, grid: Optional[Grid] = None) -> float:
    """``(sum |f|^p w h^n)^{1/p}``; ``w`` may be an array, a GridFunction or
    a weight field."""
    if isinstance(f, GridFunction):
        grid, vals = f.grid, f.samples
    else:
        vals = np.asarray(f)
    if p <= 0:
        raise ValueError("p must be positive")
    if w is None:
        wv = 1.0
    else:
        wv = getattr(w, "values", None)
        if wv is None:
            wv = w.samples if isinstance(w, GridFunction) else np.asarray(w)
    return float((np.sum(np.abs(vals) ** p * wv) * grid.cell_volume) ** (1.0 / p))


def padding_ok(f: GridFunction, tol: float = 1e-10) -> bool:
    """True when ``|f|`` on the outermost layer of nodes is below ``tol`` times its sup."""
    a = np.abs(f.samples)
    top = a.max()
    if top == 0:
        return True
    edge = 0.0
    for ax in range(a.ndim):
        edge = max(edge, np.take(a, 0, axis=ax).max(), np.take(a, -1, axis=ax).max())
    return bool(edge <= tol * top)


# -- scale decompositions ----------------------------------------------------------


def _check_window(pair: CalderonPair, window) -> tuple:
    lo, hi = int(window[0]), int(window[1])
    if lo > hi or not (pair.certified(lo) and pair.certified(hi)):
        raise WindowOutsideCertifiedRange(f"window [{lo}, {hi}] not inside certified scales {pair.scales}")
    return lo, hi


def _factor_axes(pairs) -> list:
    axes, start = [], 0
    for p in pairs:
        axes.append(tuple(range(start, start + p.dilation.dim)))
        start += p.dilation.dim
    return axes


def _check_pairs_grid(pairs, grid: Grid) -> None:
    for p, ax in zip(pairs, _factor_axes(pairs)):
        if p.grid != grid.sub(ax):
            raise GridMismatch(f"pair grid {p.grid} does not match factor grid {grid.sub(ax)}")


@dataclass
class ScaleDecomposition:
    """Coefficient fields ``f * kernel_k`` (one factor) or ``f * kernel_{k1,k2}``
    (product), computed on first access and cached."""

    f: GridFunction
    pairs: tuple
    windows: tuple
    kind: str = "phi"
    _fhat: Optional[np.ndarray] = field(default=None, repr=False)
    _cache: Dict = field(default_factory=dict, repr=False)
    _filters: Dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if isinstance(self.pairs, CalderonPair):
            self.pairs = (self.pairs,)
        self.pairs = tuple(self.pairs)
        if np.ndim(self.windows) == 1:
            self.windows = (tuple(self.windows),)
        self.windows = tuple(_check_window(p, w) for p, w in zip(self.pairs, self.windows))
        if len(self.windows) != len(self.pairs):
            raise ValueError("need one window per pair")
        _check_pairs_grid(self.pairs, self.f.grid)

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @property
    def dilations(self) -> tuple:
        return tuple(p.dilation for p in self.pairs)

    def indices(self) -> list:
        ranges = [range(w[0], w[1] + 1) for w in self.windows]
        return list(itertools.product(*ranges))

    def __len__(self) -> int:
        return int(np.prod([w[1] - w[0] + 1 for w in self.windows]))

    def _factor_filter(self, i: int, k: int) -> np.ndarray:
        key = (i, k)
        if key not in self._filters:
            self._filters[key] = self.pairs[i].filter(self.kind, k)
        return self._filters[key]

    def filter(self, idx) -> np.ndarray:
        out = None
        total = self.grid.dim
        for i, (k, ax) in enumerate(zip(idx, _factor_axes(self.pairs))):
            fl = self._factor_filter(i, k)
            shape = [1] * total
            for a, n in zip(ax, fl.shape):
                shape[a] = n
            fl = fl.reshape(shape)
            out = fl if out is None else out * fl
        return out

    def field(self, idx) -> np.ndarray:
        idx = tuple(np.atleast_1d(idx).tolist())
        if idx not in self._cache:
            if self._fhat is None:
                self._fhat = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(self.f.samples)))
            data = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(self._fhat * self.filter(idx))))
            if np.isrealobj(self.f.samples):
                data = data.real
            self._cache[idx] = data
        return self._cache[idx]

    def fields(self):
        for idx in self.indices():
            yield idx, self.field(idx)

    def as_gridfunction(self, idx) -> GridFunction:
        return GridFunction(self.grid, self.field(idx), "space", {"scale": list(np.atleast_1d(idx))})

    def truncation_energy(self) -> float:
        """Energy of ``f`` at frequencies the window does not reproduce:
        ``int |f^|^2 (1 - sum_k psi^ theta^ (k)) dxi`` (per factor product)."""
        if self._fhat is None:
            self._fhat = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(self.f.samples)))
        cover = None
        total = self.grid.dim
        for i, ((lo, hi), ax) in enumerate(zip(self.windows, _factor_axes(self.pairs))):
            p = self.pairs[i]
            s = sum(p.filter("psi", k) * p.filter("theta", k) for k in range(lo, hi + 1))
            shape = [1] * total
            for a, n in zip(ax, s.shape):
                shape[a] = n
            s = s.reshape(shape)
            cover = s if cover is None else cover * s
        spec = np.abs(self._fhat * self.grid.cell_volume) ** 2
        dxi = 1.0 / np.prod([2 * L for L in self.grid.L])
        return float(np.sum(spec * (1.0 - cover)) * dxi)


def decompose(f: GridFunction, pairs, windows, kind: str = "phi") -> ScaleDecomposition:
    return ScaleDecomposition(f, pairs, windows, kind)


def g_function(f: GridFunction, pair: CalderonPair, window, kind: str = "phi") -> GridFunction:
    """``(sum_k |f * phi_k|^2)^{1/2}`` over the window."""
    return _g(ScaleDecomposition(f, (pair,), (tuple(window),), kind))


def g_function_product(f: GridFunction, pairs, windows, kind: str = "phi") -> GridFunction:
    return _g(ScaleDecomposition(f, tuple(pairs), tuple(tuple(w) for w in windows), kind))


def _g(dec: ScaleDecomposition) -> GridFunction:
    acc = np.zeros(dec.grid.shape)
    for _, c in dec.fields():
        acc += np.abs(c) ** 2
    return GridFunction(dec.grid, np.sqrt(acc), "space", {"transform": "g"})


# -- ball indicators ------------------------------------------------------------------


def ball_indicator(d: Dilation, k: int, grid: Grid) -> np.ndarray:
    """Rasterized ``B_k`` on ``grid`` (node membership; origin always in),
    normalized to unit sum."""
    mask = np.asarray(ball_membership(d, grid.points(), k), dtype=float)
    mask[grid.origin_index] = 1.0
    return mask / mask.sum()


def ball_footprint(d: Dilation, k: int, h: Sequence[float]) -> np.ndarray:
    """Boolean structuring element of the nodes ``o*h`` in ``B_k``."""
    from .weights import ball_stencil

    offs = ball_stencil(d, k, h)
    half = np.abs(offs).max(axis=0)
    fp = np.zeros(tuple(2 * half + 1), dtype=bool)
    fp[tuple((offs + half).T)] = True
    return fp


def _factor_average(data: np.ndarray, kernel: np.ndarray, axes: tuple) -> np.ndarray:
    """Periodic convolution of ``data`` with a unit-sum ``kernel`` along ``axes``."""
    K = np.fft.fftn(np.fft.ifftshift(kernel))
    shape = [1] * data.ndim
    for a, n in zip(axes, kernel.shape):
        shape[a] = n
    D = np.fft.fftn(np.fft.ifftshift(data, axes=axes), axes=axes)
    out = np.fft.fftshift(np.fft.ifftn(D * K.reshape(shape), axes=axes), axes=axes)
    return out.real


class _BallCache:
    def __init__(self, dilations, grid):
        self.dilations = dilations
        self.axes = []
        start = 0
        for d in dilations:
            self.axes.append(tuple(range(start, start + d.dim)))
            start += d.dim
        self.grids = [grid.sub(ax) for ax in self.axes]
        self._ind = {}

    def indicator(self, i, k):
        if (i, k) not in self._ind:
            self._ind[(i, k)] = ball_indicator(self.dilations[i], k, self.grids[i])
        return self._ind[(i, k)]


def h_norm(coeffs, dilations=None, grid: Optional[Grid] = None) -> GridFunction:
    """Ball-averaged l^2 norm of a scale-indexed family:
    ``(sum_k avg_{y in B_k} |c_k(x - y)|^2)^{1/2}`` with products of balls for
    product families.

    ``coeffs`` is a :class:`ScaleDecomposition` or a mapping from scale
    tuples to arrays (then ``dilations`` and ``grid`` are required).
    """
    if isinstance(coeffs, ScaleDecomposition):
        dilations, grid = coeffs.dilations, coeffs.grid
        items = coeffs.fields()
    else:
        items = sorted(coeffs.items())
    balls = _BallCache(tuple(dilations), grid)
    acc = np.zeros(grid.shape)
    for idx, c in items:
        sq = np.abs(c) ** 2
        for i, k in enumerate(np.atleast_1d(idx)):
            sq = _factor_average(sq, balls.indicator(i, int(k)), balls.axes[i])
        acc += sq
    return GridFunction(grid, np.sqrt(np.maximum(acc, 0.0)), "space", {"transform": "H"})


def area_function(f: GridFunction, pairs, windows, kind: str = "phi") -> GridFunction:
    """Lusin area function ``S(f)`` over the window(s)."""
    if isinstance(pairs, CalderonPair):
        pairs, windows = (pairs,), (tuple(windows),)
    dec = ScaleDecomposition(f, tuple(pairs), tuple(tuple(w) for w in windows), kind)
    out = h_norm(dec)
    out.meta["transform"] = "S"
    return out


def strong_maximal(f: GridFunction, d1: Dilation, d2: Dilation, window) -> GridFunction:
    """Strong maximal function over products of dilated balls with scales in
    ``window`` (one range used for both factors, or a pair of ranges).

    For each scale pair the rectangle averages are formed by per-factor
    periodic convolution; the sup over rectangles containing ``x`` is a
    maximum filter with the rectangle as footprint.  ``|f|`` itself (the
    limit of shrinking rectangles) is included.
    """
    grid = f.grid
    if np.ndim(window) == 1:
        window = (tuple(window), tuple(window))
    balls = _BallCache((d1, d2), grid)
    absf = np.abs(f.samples)
    best = absf.copy()
    for k1 in range(window[0][0], window[0][1] + 1):
        avg1 = _factor_average(absf, balls.indicator(0, k1), balls.axes[0])
        fp1 = ball_footprint(d1, k1, balls.grids[0].h)
        for k2 in range(window[1][0], window[1][1] + 1):
            avg = _factor_average(avg1, balls.indicator(1, k2), balls.axes[1])
            fp2 = ball_footprint(d2, k2, balls.grids[1].h)
            pooled = _max_pool(avg, fp1, balls.axes[0])
            pooled = _max_pool(pooled, fp2, balls.axes[1])
            np.maximum(best, pooled, out=best)
    return GridFunction(grid, best, "space", {"transform": "M_s"})


def _max_pool(data: np.ndarray, footprint: np.ndarray, axes: tuple) -> np.ndarray:
    if footprint.size == 1:
        return data
    shape = [1] * data.ndim
    for a, n in zip(axes, footprint.shape):
        shape[a] = n
    return ndimage.maximum_filter(data, footprint=footprint.reshape(shape), mode="wrap")
