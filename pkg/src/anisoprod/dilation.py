"""Calculus of a single expansive dilation matrix.

A :class:`Dilation` carries the unit-volume ellipsoid ``Delta = {x : x'Px < c}``,
the dilated balls ``B_k = A^k Delta``, the step quasi-norm ``rho`` (equal to
``b^k`` on the shell ``B_{k+1} \\ B_k``), the sum-law exponent ``sigma`` and the
spectral bounds ``lambda_-``, ``lambda_+``.

Everything here is pure; a constructed dilation is never mutated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gamma

from .errors import NonFinite, NotExpansive

_SERIES_TOL = 1e-14
_R_SHRINK = 1.0 - 1e-9


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


@dataclass(frozen=True, eq=False)
class Dilation:
    matrix: np.ndarray
    dim: int
    det_abs: float
    lambda_minus: float
    lambda_plus: float
    zeta_minus: float
    zeta_plus: float
    P: np.ndarray
    c: float
    expansion_ratio: float
    sigma: int
    inverse: np.ndarray
    # x = E u maps the open unit ball onto Delta
    ball_map: np.ndarray

    @property
    def b(self) -> float:
        return self.det_abs

    @property
    def ellipsoid_form(self):
        return self.P, self.c

    def power(self, k: int) -> np.ndarray:
        """``A^k`` for any integer ``k`` (negative powers use ``A^{-1}``)."""
        k = int(k)
        if k >= 0:
            return np.linalg.matrix_power(self.matrix, k)
        return np.linalg.matrix_power(self.inverse, -k)

    def transpose(self, delta: float = 1e-6) -> "Dilation":
        return make_dilation(self.matrix.T, delta=delta)

    def to_json(self) -> str:
        return dilation_to_json(self)

    def __repr__(self):
        return (
            f"Dilation(matrix={self.matrix.tolist()}, b={self.b:.6g}, sigma={self.sigma}, "
            f"r={self.expansion_ratio:.6g})"
        )


def make_dilation(matrix, *, delta: float = 1e-6) -> Dilation:
    """Build the full dilation calculus of ``matrix``.

    ``delta`` is the relative slack used for the spectral bounds:
    ``lambda_- = (1 - delta) min|lambda|`` and ``lambda_+ = (1 + delta) max|lambda|``.
    """
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"dilation matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFinite("dilation matrix has NaN or infinite entries")
    n = A.shape[0]
    moduli = np.abs(np.linalg.eigvals(A))
    if moduli.min() <= 1.0 + 1e-12:
        raise NotExpansive(f"eigenvalue modulus {moduli.min():.6g} <= 1")
    b = abs(float(np.linalg.det(A)))
    # integral determinants are common (integer matrices); snapping keeps
    # b**k products exact where the float determinant is off by an ulp
    if abs(b - round(b)) <= 1e-12 * b:
        b = float(round(b))
    Ainv = np.linalg.inv(A)

    # P = sum_j (A^{-T})^j (A^{-1})^j, so that A^{-T} P A^{-1} = P - I.
    P = np.zeros((n, n))
    term_factor = np.eye(n)
    for _ in range(100000):
        term = term_factor.T @ term_factor
        P += term
        if np.linalg.norm(term, 2) < _SERIES_TOL:
            break
        term_factor = Ainv @ term_factor
    P = 0.5 * (P + P.T)

    evals, evecs = np.linalg.eigh(P)
    c = (math.sqrt(float(np.prod(evals))) / unit_ball_volume(n)) ** (2.0 / n)
    lam_max = float(evals.max())
    r = math.sqrt(lam_max / (lam_max - 1.0)) * _R_SHRINK
    P_inv_half = evecs @ np.diag(evals ** -0.5) @ evecs.T
    ball_map = math.sqrt(c) * P_inv_half

    sigma = 1
    while True:
        M = np.linalg.matrix_power(Ainv, sigma)
        G = P_inv_half @ M.T @ P @ M @ P_inv_half
        if 4.0 * np.linalg.eigvalsh(0.5 * (G + G.T)).max() <= 1.0:
            break
        sigma += 1

    lam_minus = (1.0 - delta) * float(moduli.min())
    lam_plus = (1.0 + delta) * float(moduli.max())
    if lam_minus <= 1.0:
        lam_minus = 0.5 * (1.0 + float(moduli.min()))
    logb = math.log(b)
    return Dilation(
        matrix=A,
        dim=n,
        det_abs=b,
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        zeta_minus=math.log(lam_minus) / logb,
        zeta_plus=math.log(lam_plus) / logb,
        P=P,
        c=c,
        expansion_ratio=r,
        sigma=sigma,
        inverse=Ainv,
        ball_map=ball_map,
    )


def _points(d: Dilation, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def _quad_at(d: Dilation, X: np.ndarray, K) -> np.ndarray:
    """``(A^{-k}x)' P (A^{-k}x)`` with a per-point scale index ``K``."""
    K = np.broadcast_to(np.asarray(K, dtype=np.int64), X.shape[:-1])
    out = np.empty(X.shape[:-1])
    for k in np.unique(K):
        sel = K == k
        y = X[sel] @ d.power(-int(k)).T
        out[sel] = np.einsum("...i,ij,...j->...", y, d.P, y)
    return out


def ball_quadratic(d: Dilation, x, k) -> np.ndarray:
    X = _points(d, x)
    return _quad_at(d, X, k)


def ball_membership(d: Dilation, x, k):
    """True where ``x`` lies in the open ball ``B_k``."""
    X = _points(d, x)
    res = _quad_at(d, X, k) < d.c
    return bool(res) if res.ndim == 0 else res


_ZERO_SHELL = np.iinfo(np.int64).min


def shell_index(d: Dilation, x) -> np.ndarray:
    """Integer ``k`` with ``x`` in ``B_{k+1} \\ B_k``; ``_ZERO_SHELL`` at the origin.

    Doubling search from ``k = 0`` followed by bisection; membership is
    monotone in ``k`` so the search is exact.
    """
    X = _points(d, x)
    shape = X.shape[:-1]
    flat = X.reshape(-1, d.dim)
    nonzero = np.any(flat != 0.0, axis=1)
    pts = flat[nonzero]
    m = np.zeros(len(pts), dtype=np.int64)
    if len(pts):
        inside0 = _quad_at(d, pts, 0) < d.c
        # invariant: member at hi, not member at lo
        hi = np.where(inside0, 0, 1)
        lo = np.where(inside0, -1, 0)
        step = np.ones(len(pts), dtype=np.int64)
        for _ in range(64):
            need_up = ~(_quad_at(d, pts, hi) < d.c)
            need_down = _quad_at(d, pts, lo) < d.c
            if not (need_up.any() or need_down.any()):
                break
            lo = np.where(need_up, hi, lo)
            hi = np.where(need_up, hi + step, hi)
            hi = np.where(need_down, lo, hi)
            lo = np.where(need_down, lo - step, lo)
            step = np.where(need_up | need_down, 2 * step, step)
        while True:
            gap = hi - lo
            active = gap > 1
            if not active.any():
                break
            mid = lo + gap // 2
            inside = _quad_at(d, pts, mid) < d.c
            hi = np.where(active & inside, mid, hi)
            lo = np.where(active & ~inside, mid, lo)
        m = hi - 1
    out = np.full(flat.shape[0], _ZERO_SHELL, dtype=np.int64)
    out[nonzero] = m
    return out.reshape(shape)


def quasi_norm(d: Dilation, x):
    """Step homogeneous quasi-norm ``rho(x)``."""
    k = shell_index(d, x)
    out = np.where(k == _ZERO_SHELL, 0.0, np.power(d.b, np.where(k == _ZERO_SHELL, 0, k).astype(float)))
    return float(out) if out.ndim == 0 else out


def log_quasi_norm(d: Dilation, x) -> np.ndarray:
    """``log_b`` of the continuous quasi-norm (``-inf`` at the origin).

    Inside the shell ``B_{k+1} \\ B_k`` the value is ``k + tau`` where ``tau``
    interpolates logarithmically along rays between the inner and outer
    ellipsoids, so the result is continuous, increases by exactly one under
    ``x -> Ax`` and agrees with ``log_b rho`` on every inner shell boundary.
    """
    X = _points(d, x)
    k = shell_index(d, X)
    zero = k == _ZERO_SHELL
    ks = np.where(zero, 0, k)
    inner = _quad_at(d, X, ks) / d.c
    outer = _quad_at(d, X, ks + 1) / d.c
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.log(np.where(zero, 1.0, inner))
        o = np.log(np.where(zero, 0.5, outer))
        tau = np.clip(a / (a - o), 0.0, 1.0)
    return np.where(zero, -np.inf, ks + tau)


def continuous_quasi_norm(d: Dilation, x):
    u = log_quasi_norm(d, x)
    out = np.where(np.isneginf(u), 0.0, np.power(d.b, np.where(np.isneginf(u), 0.0, u)))
    return float(out) if out.ndim == 0 else out


# -- sampling -------------------------------------------------------------


def sample_ball(d: Dilation, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the open ball ``B_k``."""
    n = d.dim
    g = rng.standard_normal((size, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = rng.random(size) ** (1.0 / n)
    u = g * rad[:, None] * (1.0 - 1e-12)
    return u @ d.ball_map.T @ d.power(k).T


def sample_outside(d: Dilation, k: int, size: int, rng: np.random.Generator, spread: float = 3.0) -> np.ndarray:
    """Samples in the complement of ``B_k`` (radial factor in ``[1, spread]``)."""
    n = d.dim
    g = rng.standard_normal((size, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = 1.0 + 1e-12 + (spread - 1.0) * rng.random(size)
    u = g * rad[:, None]
    return u @ d.ball_map.T @ d.power(k).T


class SumLawResult(NamedTuple):
    ok: bool
    witness: Optional[tuple]

    def __bool__(self):
        return bool(self.ok)


def check_ball_sum_law(d: Dilation, k: int, l: int, samples: int, rng=None) -> SumLawResult:
    """Sampled check of ``B_k + B_l in B_{max(k,l)+sigma}`` and of
    ``B_k + (B_{k+sigma})^c in (B_k)^c``.

    Returns a falsy result carrying an offending pair on failure.
    """
    rng = np.random.default_rng(rng)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if samples == 1:
        x = np.zeros((1, d.dim))
        y = np.zeros((1, d.dim))
    else:
        x = sample_ball(d, k, samples, rng)
        y = sample_ball(d, l, samples, rng)
    top = max(k, l) + d.sigma
    inside = ball_membership(d, x + y, top)
    inside = np.atleast_1d(inside)
    if not inside.all():
        i = int(np.argmin(inside))
        return SumLawResult(False, ("sum", x[i].tolist(), y[i].tolist()))
    if samples > 1:
        xo = sample_ball(d, k, samples, rng)
        yo = sample_outside(d, k + d.sigma, samples, rng)
        bad = np.atleast_1d(ball_membership(d, xo + yo, k))
        if bad.any():
            i = int(np.argmax(bad))
            return SumLawResult(False, ("complement", xo[i].tolist(), yo[i].tolist()))
    return SumLawResult(True, None)


# -- JSON -----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(t) for t in v) + "]"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def dilation_to_json(d: Dilation) -> str:
    fields = {
        "matrix": d.matrix.tolist(),
        "b": d.b,
        "P": d.P.tolist(),
        "c": d.c,
        "r": d.expansion_ratio,
        "sigma": int(d.sigma),
        "lambda_minus": d.lambda_minus,
        "lambda_plus": d.lambda_plus,
    }
    body = ", ".join(f'"{key}": {_fmt(val)}' for key, val in fields.items())
    return "{" + body + "}"


def dilation_from_json(text: str, delta: float = 1e-6) -> Dilation:
    data = json.loads(text)
    return make_dilation(np.asarray(data["matrix"], dtype=float), delta=delta)


def parse_matrix(text: str, dim: Optional[int] = None) -> np.ndarray:
    """Parse ``"2"``, ``"1.5,4"`` (diagonal) or ``"2,1;0,3"`` (rows)."""
    text = text.strip()
    if ";" in text:
        rows = [[float(t) for t in row.split(",")] for row in text.split(";")]
        M = np.asarray(rows)
    else:
        vals = [float(t) for t in text.replace(" ", ",").split(",") if t]
        if dim is not None and len(vals) == dim * dim and dim > 1:
            M = np.asarray(vals).reshape(dim, dim)
        elif len(vals) == 1:
            M = vals[0] * np.eye(dim or 1)
        else:
            M = np.diag(vals)
    if dim is not None and M.shape != (dim, dim):
        raise ValueError(f"matrix {text!r} does not have dimension {dim}")
    return M
