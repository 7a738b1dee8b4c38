"""Uniform grids over centered boxes and the sampled-field type built on them.

Nodes along an axis of half-width ``L`` with ``N`` points sit at
``-L + j*h`` (``h = 2L/N``), so the origin is node ``N//2``.  A staggered grid
shifts every node by ``h/2`` and is used for midpoint quadrature of weights
that are singular at the origin.

Frequency grids use the cycles convention ``f^(xi) = int f(x) exp(-2 pi i x.xi) dx``
and are stored centered as well: node ``N//2`` is ``xi = 0``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FormatError, GridMismatch

MAGIC = b"AGF1"
_DOMAIN_CODES = {"space": 0, "frequency": 1, "space-staggered": 2}


def _as_tuple(value, dim):
    if np.isscalar(value):
        return (value,) * dim
    value = tuple(value)
    if len(value) != dim:
        raise ValueError(f"expected {dim} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``prod_i [-L_i, L_i)``."""

    N: tuple
    L: tuple
    staggered: bool = False

    def __post_init__(self):
        N = tuple(int(n) for n in np.atleast_1d(self.N))
        L = tuple(float(x) for x in np.atleast_1d(self.L))
        if len(L) == 1 and len(N) > 1:
            L = L * len(N)
        if len(N) != len(L):
            raise ValueError("N and L must have the same length")
        for n in N:
            if n < 2 or n & (n - 1):
                raise ValueError(f"points per axis must be a power of two, got {n}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", L)

    @classmethod
    def cube(cls, dim: int, N: int, L: float, staggered: bool = False) -> "Grid":
        return cls((N,) * dim, (L,) * dim, staggered)

    @property
    def dim(self) -> int:
        return len(self.N)

    @property
    def shape(self) -> tuple:
        return self.N

    @property
    def h(self) -> tuple:
        return tuple(2.0 * L / N for L, N in zip(self.L, self.N))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis(self, i: int) -> np.ndarray:
        h = self.h[i]
        offset = 0.5 * h if self.staggered else 0.0
        return -self.L[i] + offset + h * np.arange(self.N[i])

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.dim)]

    def freq_axis(self, i: int) -> np.ndarray:
        return np.fft.fftshift(np.fft.fftfreq(self.N[i], self.h[i]))

    def freq_axes(self) -> list:
        return [self.freq_axis(i) for i in range(self.dim)]

    def points(self) -> np.ndarray:
        """All nodes as an array of shape ``(*N, dim)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def freq_points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.freq_axes(), indexing="ij"), axis=-1)

    @property
    def origin_index(self) -> tuple:
        return tuple(n // 2 for n in self.N)

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(tuple(n * factor for n in self.N), self.L, self.staggered)

    def sub(self, axes: Sequence[int]) -> "Grid":
        return Grid(tuple(self.N[i] for i in axes), tuple(self.L[i] for i in axes), self.staggered)


@dataclass
class GridFunction:
    """Samples of a scalar field on a :class:`Grid`.

    ``evaluator`` optionally holds the closed form the samples came from; it
    maps an array of points ``(..., dim)`` to values and lets resampling
    routines avoid interpolation.
    """

    grid: Grid
    samples: np.ndarray
    domain: str = "space"
    meta: dict = field(default_factory=dict)
    evaluator: Optional[Callable] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.shape != self.grid.shape:
            raise GridMismatch(f"samples shape {self.samples.shape} != grid shape {self.grid.shape}")
        if self.domain not in ("space", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, domain: str = "space", **meta) -> "GridFunction":
        pts = grid.points() if domain == "space" else grid.freq_points()
        return cls(grid, np.asarray(func(pts)), domain, dict(meta), func)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def like(self, samples, **kw) -> "GridFunction":
        meta = dict(self.meta)
        meta.update(kw.pop("meta", {}))
        return GridFunction(self.grid, samples, kw.pop("domain", self.domain), meta, kw.pop("evaluator", None))

    def integral(self) -> complex:
        return self.samples.sum() * self.grid.cell_volume

    def norm1(self) -> float:
        return float(np.abs(self.samples).sum() * self.grid.cell_volume)

    def sup(self) -> float:
        return float(np.abs(self.samples).max())

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.samples.copy(), self.domain, dict(self.meta), self.evaluator)

    # -- serialization -------------------------------------------------
    def save(self, path) -> None:
        write_agf(path, self)

    @classmethod
    def load(cls, path) -> "GridFunction":
        return read_agf(path)


def _check_fft_grid(grid: Grid) -> None:
    if grid.staggered:
        raise GridMismatch("FFT routines need an unstaggered grid (origin on a node)")


def fourier(f: GridFunction) -> GridFunction:
    """Quadrature approximation of the Fourier transform on the dual grid."""
    _check_fft_grid(f.grid)
    data = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(f.samples)))
    return GridFunction(f.grid, data * f.grid.cell_volume, "frequency", dict(f.meta))


def inverse_fourier(F: GridFunction, real: bool = False) -> GridFunction:
    _check_fft_grid(F.grid)
    data = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(F.samples))) / F.grid.cell_volume
    if real:
        data = data.real
    return GridFunction(F.grid, data, "space", dict(F.meta))


def to_fft_order(arr: np.ndarray) -> np.ndarray:
    return np.fft.ifftshift(arr)


def from_fft_order(arr: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(arr)


# -- AGF1 binary format ------------------------------------------------------
#
# little-endian: magic "AGF1" | uint32 dim | uint32 N[dim] | float64 L[dim]
# | uint8 domain (0 space, 1 frequency, 2 staggered space) | uint8 complex flag
# | raw float64 samples, row-major (complex stored as interleaved re, im)


def write_agf(path, f: GridFunction) -> None:
    grid = f.grid
    domain = "space-staggered" if (grid.staggered and f.domain == "space") else f.domain
    is_complex = np.iscomplexobj(f.samples)
    header = MAGIC + struct.pack("<I", grid.dim)
    header += struct.pack(f"<{grid.dim}I", *grid.N)
    header += struct.pack(f"<{grid.dim}d", *grid.L)
    header += struct.pack("<BB", _DOMAIN_CODES[domain], int(is_complex))
    dtype = "<c16" if is_complex else "<f8"
    body = np.ascontiguousarray(f.samples, dtype=dtype).tobytes(order="C")
    Path(path).write_bytes(header + body)


def read_agf(path) -> GridFunction:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    pos = 4
    (dim,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    N = struct.unpack_from(f"<{dim}I", raw, pos)
    pos += 4 * dim
    L = struct.unpack_from(f"<{dim}d", raw, pos)
    pos += 8 * dim
    code, is_complex = struct.unpack_from("<BB", raw, pos)
    pos += 2
    names = {v: k for k, v in _DOMAIN_CODES.items()}
    if code not in names:
        raise FormatError(f"{path}: unknown domain code {code}")
    domain = names[code]
    dtype = "<c16" if is_complex else "<f8"
    count = int(np.prod(N))
    expected = count * (16 if is_complex else 8)
    if len(raw) - pos != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, found {len(raw) - pos}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(N).astype(
        complex if is_complex else float
    )
    grid = Grid(N, L, staggered=(domain == "space-staggered"))
    return GridFunction(grid, data, "frequency" if domain == "frequency" else "space")
