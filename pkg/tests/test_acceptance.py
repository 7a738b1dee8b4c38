"""Acceptance criteria 1-10 at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL ...`` line (visible with or
without ``-s``) and then asserts the same verdict.  Run on its own with
``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from anisoprod import atoms as at
from anisoprod import pasio as pa
from anisoprod.bump import decompose_bump, gaussian_difference, is_normalized_bump
from anisoprod.calderon import build_calderon_pair, moment_check
from anisoprod.config import default_config
from anisoprod.dilation import (ball_membership, ball_quadratic, check_ball_sum_law, make_dilation, quasi_norm,
                                shell_index)
from anisoprod.errors import PVNotConvergent
from anisoprod.experiments import run_norm_equivalence, run_t11, run_t12_decay
from anisoprod.grid import Grid, GridFunction
from anisoprod.transforms import convolve
from anisoprod.weights import ap_constant_estimate, constant_weight, is_stable, power_weight, product_power_weight

from conftest import multiscale_points, random_expansive


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            sys.stdout.write(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}\n")
            sys.stdout.flush()
    return emit


# -- 1. dilation calculus ------------------------------------------------------


def test_criterion_1_dilation_calculus(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    violations, pairs, mats = 0, 0, []
    for i in range(10):
        n = 1 + i % 3
        d = make_dilation(random_expansive(rng, n))
        mats.append(n)
        H = d.b ** d.sigma
        x = multiscale_points(rng, n, 10_000)
        y = multiscale_points(rng, n, 10_000)
        rx, ry = quasi_norm(d, x), quasi_norm(d, y)
        # (i) vanishes exactly at the origin
        violations += int(quasi_norm(d, np.zeros(n)) != 0.0) + int(np.sum(rx <= 0))
        # (ii) homogeneity under A, checked on the shell index and on the value
        Ax = x @ d.matrix.T
        violations += int(np.sum(shell_index(d, Ax) != shell_index(d, x) + 1))
        violations += int(np.sum(~np.isclose(quasi_norm(d, Ax), d.b * rx, rtol=1e-13, atol=0)))
        # (iii) quasi-triangle inequality with H = b^sigma
        violations += int(np.sum(quasi_norm(d, x + y) > H * (rx + ry)))
        for k in range(-3, 4):
            for l in range(-3, 4):
                pairs += 1
                violations += int(not check_ball_sum_law(d, k, l, 1000, rng))
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    report(1, ok, f"dims {mats}, {violations} violations over 10 x 1e4 samples and {pairs} sum-law cells, "
                  f"{elapsed:.1f} s")
    assert ok


# -- 2. A_p estimator -----------------------------------------------------------


def _transition(d, grid, p, alphas):
    """(last stable alpha, first unstable alpha) scanning upward from 0."""
    last, first = None, None
    for a in alphas:
        w = power_weight(d, grid, float(a))
        e0 = ap_constant_estimate(w, p, (-4, 4), 64)
        e1 = ap_constant_estimate(w, p, (-8, 8), 64)
        if is_stable(e0.trend, e1.trend):
            last = float(a)
        else:
            first = float(a)
            break
    return last, first


def test_criterion_2_ap_estimator(report):
    t0 = time.perf_counter()
    d = make_dilation(2.0)
    grid = Grid((2 ** 15,), (256.0,), staggered=True)
    ones = {p: ap_constant_estimate(constant_weight(grid, d), p, (-4, 4), 64).value for p in (1.0, 2.0, 4.0)}
    exact = all(v == 1.0 for v in ones.values())
    # class boundary alpha = p - 1 (alpha = 0 for A_1); scanned on a 0.1 lattice
    brackets = {}
    for p in (1.0, 2.0, 4.0):
        alphas = np.round(np.arange(0.0, p + 0.51, 0.1), 10)
        brackets[p] = _transition(d, grid, p, alphas)
    good = all(lo is not None and hi is not None and lo <= p - 1 <= hi and hi - lo <= 0.1 + 1e-12
               and abs(lo - (p - 1)) <= 0.1 + 1e-12 and abs(hi - (p - 1)) <= 0.1 + 1e-12
               for p, (lo, hi) in brackets.items())
    # lower boundary alpha = -1 for p = 2: -0.9 stable, -1.0 not
    lower = _transition(d, grid, 2.0, [-0.9, -1.0])
    good = good and lower == (-0.9, -1.0)
    elapsed = time.perf_counter() - t0
    ok = exact and good and elapsed < 120
    report(2, ok, f"w=1 -> {ones}; transitions {brackets}; lower {lower}; {elapsed:.1f} s")
    assert ok


# -- 3. Calderon pair -------------------------------------------------------------


def test_criterion_3_calderon_pair(report):
    cases = [(2.0, Grid.cube(1, 1024, 32.0)), (np.diag([2.0, 2.0]), Grid.cube(2, 128, 16.0)),
             (np.diag([1.5, 4.0]), Grid.cube(2, 256, 16.0))]
    residuals = []
    for matrix, grid in cases:
        pair = build_calderon_pair(make_dilation(matrix), 1, grid, min_cells=4)
        residuals.append(pair.identity_residual)
    pair = build_calderon_pair(make_dilation(2.0), 3, Grid.cube(1, 1024, 32.0))
    phi, psi = pair.space_kernel("phi", 0), pair.space_kernel("psi", 0)
    roundtrip = float(np.max(np.abs(convolve(phi, phi).samples - psi.samples)))
    big = build_calderon_pair(make_dilation(2.0), 3, Grid.cube(1, 16384, 1024.0))
    moments = moment_check(big.space_kernel("psi", 0), 3, relative=True)
    ok = max(residuals) <= 1e-8 and roundtrip <= 1e-8 and moments <= 1e-8
    report(3, ok, f"identity residuals {[f'{r:.1e}' for r in residuals]}, phi*phi-psi {roundtrip:.1e}, "
                  f"moments to order 3 {moments:.1e}")
    assert ok


# -- 4. bump decomposition -----------------------------------------------------------


def test_criterion_4_bump_decomposition(report):
    d = make_dilation(2.0)
    grid = Grid.cube(1, 131072, 64.0)
    psi = gaussian_difference(grid)
    M, N, k_max = 4, 3, 20
    dec = decompose_bump(psi, d, M, N, k_max)
    err = dec.reconstruction_error() / psi.sup()
    pts = grid.points()
    bad_support, bad_mean, bad_bump = [], [], []
    for k, t in enumerate(dec.terms):
        if np.any(t.samples[ball_quadratic(d, pts, k) >= d.c]):
            bad_support.append(k)
        if abs(t.integral()) > 1e-12 * max(t.norm1(), 1e-300) + 1e-300:
            bad_mean.append(k)
        rep = is_normalized_bump(t.like(t.samples / dec.c), d, N, k, tol=1.0 + 1e-9)
        if not rep.ok:
            bad_bump.append(k)
    slope, _ = dec.d_decay_fit()
    target = -M * math.log(d.b) * 0.95
    ok = err <= 1e-8 and not (bad_support or bad_mean or bad_bump) and slope <= target
    report(4, ok, f"reconstruction {err:.1e} of sup, failing terms support {bad_support} mean {bad_mean} "
                  f"bump {bad_bump}, d_k slope {slope:.3f} (needs <= {target:.3f})")
    assert ok


# -- 5. norm equivalence ------------------------------------------------------------


def test_criterion_5_norm_equivalence(report):
    res = run_norm_equivalence(default_config("norm_equivalence"))
    s = res.summary
    ok = s["max_spread"] <= 10 and s["max_drift"] <= 0.10
    report(5, ok, f"max spread {s['max_spread']:.3f} (<= 10), max drift {s['max_drift']:.3f} (<= 0.10)")
    assert ok


# -- 6. kernel conditions -------------------------------------------------------------


def test_criterion_6_kernel_conditions(report):
    d = make_dilation(2.0)
    hilbert = pa.kernel_from_spec("tensorcz:profile=sign", d, d)
    k1 = pa.check_K1(hilbert, 0, 0).worst
    k2 = pa.check_K2(hilbert, pa.bump_family(d, 3, 4), (-2, 2))
    ratio = k2.details["ladder_ratio"]
    try:
        pa.check_K2(pa.kernel_from_spec("tensorcz:profile=one", d, d), pa.bump_family(d, 3, 1), (0, 0))
        rejected = False
    except PVNotConvergent:
        rejected = True
    ok = k1 <= 1 + 1e-6 and ratio <= 1 / d.b + 0.1 and np.isfinite(k2.worst) and rejected
    report(6, ok, f"K1 constant {k1:.9f}, K2 ladder ratio {ratio:.3f} (<= {1 / d.b + 0.1:.2f}), "
                  f"no-cancellation kernel rejected: {rejected}")
    assert ok


# -- 7. smoothed kernel decay -----------------------------------------------------------


def test_criterion_7_smoothed_kernel(report):
    d = make_dilation(2.0)
    hilbert = pa.kernel_from_spec("tensorcz:profile=sign", d, d)
    worst, seen = 0.0, set()
    for scales, j in (((0, 0), (0, 0)), ((1, -1), (0, 2)), ((1, 0), (0, 1)), ((2, 0), (1, 0))):
        phis = [pa.odd_bump(d, 5, j[0]), pa.odd_bump(d, 5, j[1])]
        rep = pa.smoothed_kernel_bound_check(hilbert, phis, scales, j)
        for slope, expected in zip(rep.details["slopes"], rep.details["expected_slopes"]):
            worst = max(worst, abs(slope / expected - 1))
        seen |= {key for key, v in rep.details["regimes"].items() if v is not None and np.isfinite(v)}
    ok = worst <= 0.10 and len(seen) == 4
    report(7, ok, f"worst relative slope error {worst:.4f} (<= 0.10), regimes exercised {sorted(seen)}")
    assert ok


# -- 8. bounded operator shadow ---------------------------------------------------------


def test_criterion_8_operator_bound(report):
    t0 = time.perf_counter()
    res = run_t11(default_config("t11"))
    elapsed = time.perf_counter() - t0
    s = res.summary
    sups = {w: e["sup_by_N"] for w, e in s["per_weight"].items()}
    finite = all(math.isfinite(v) for e in sups.values() for v in e.values())
    ok = finite and s["max_drift"] <= 0.20 and elapsed < 300
    report(8, ok, f"sup ratios {sups}, max drift {s['max_drift']:.3f} (<= 0.20), {elapsed:.1f} s")
    assert ok


# -- 9. atom tail decay -------------------------------------------------------------------


def test_criterion_9_atom_decay(report):
    t0 = time.perf_counter()
    cfg = default_config("t12_decay")
    res = run_t12_decay(cfg)
    elapsed = time.perf_counter() - t0
    s = res.summary
    d1 = make_dilation(float(cfg.dilation1))
    need = 0.5 * s["eta"][0] * math.log(d1.b)
    slope = s["slope"]
    ok = (slope is not None and slope < 0 and abs(slope) >= need and s["gamma0_mass"] > 0 and elapsed < 300)
    report(9, ok, f"slope {slope:.3f}, needs |slope| >= {need:.3f} (eta_1 {s['eta'][0]:.4f}, r {s['r']}), "
                  f"gamma=0 mass {s['gamma0_mass']:.3e}, {elapsed:.1f} s")
    assert ok


# -- 10. atoms and cubes ---------------------------------------------------------------------


def _independent_moments(a, grid, s, c1, c2):
    """Largest slice moment relative to the matching absolute moment."""
    x1, x2 = grid.axis(0) - c1, grid.axis(1) - c2
    h = grid.h[0]
    worst = 0.0
    for j in range(s[0] + 1):
        m = (x1[:, None] ** j * a).sum(axis=0) * h
        ref = (np.abs(x1[:, None]) ** j * np.abs(a)).sum() * h * grid.h[1]
        worst = max(worst, float(np.max(np.abs(m)) * grid.h[1] / ref))
    for j in range(s[1] + 1):
        m = (a * x2[None, :] ** j).sum(axis=1) * grid.h[1]
        ref = (np.abs(a) * np.abs(x2[None, :]) ** j).sum() * grid.h[1] * h
        worst = max(worst, float(np.max(np.abs(m)) * h / ref))
    return worst


def test_criterion_10_atoms_and_cubes(report):
    d = make_dilation(2.0)
    cubes = at.christ_cubes(d)
    grid = Grid((128, 128), (16.0, 16.0))
    rng = np.random.default_rng(10)
    weighted = product_power_weight(d, d, grid, 0.5, 0.0)
    ones = np.ones(grid.shape)
    worst_mom, worst_norm, bad = 0.0, 0.0, 0
    for i in range(50):
        r1, r2 = cubes.cube(1, [int(rng.integers(-2, 3))]), cubes.cube(1, [int(rng.integers(-2, 3))])
        rect = at.Rect(r1, r2)
        q = float(rng.choice([2.0, 3.0, 4.0]))
        w = weighted if i % 2 else None
        low = at.required_moment_order(1.0, 1.5 if w else 1.0, d.zeta_minus)
        s = (int(rng.integers(low, 4)), int(rng.integers(low, 4)))
        f = GridFunction(grid, rng.standard_normal(grid.shape))
        atom = at.make_rectangular_atom(f, rect, (1.0, q, s), w)
        a = atom.samples.samples
        # support inside R'' from the ball forms directly
        e1, e2 = rect.support_exponents()
        inside = (ball_membership(d, (grid.axis(0) - r1.center[0])[:, None], e1)[:, None]
                  & ball_membership(d, (grid.axis(1) - r2.center[0])[:, None], e2)[None, :])
        bad += int(np.any(a[~inside]))
        worst_mom = max(worst_mom, _independent_moments(a, grid, s, r1.center[0], r2.center[0]))
        # weighted L^q norm against w(R)^{1/q - 1}; R is the node set of Q1 x Q2
        wv = ones if w is None else w.values
        in_r = r1.contains(grid.axis(0)[:, None])[:, None] & r2.contains(grid.axis(1)[:, None])[None, :]
        wR = float(np.sum(wv[in_r]) * grid.cell_volume)
        norm = float(np.sum(np.abs(a) ** q * wv) * grid.cell_volume) ** (1 / q)
        worst_norm = max(worst_norm, abs(norm / wR ** (1 / q - 1) - 1))
    sandwich = {}
    for name, matrix in (("2", 2.0), ("diag(2,4)", np.diag([2.0, 4.0]))):
        dm = make_dilation(matrix)
        g = at.christ_cubes(dm)
        cs = [c for k in range(-3, 4) for c in g.cubes_near(k, np.full(dm.dim, 0.3), 3)]
        sandwich[name] = bool(at.sandwich_check(g, cs, samples=1000, rng=0).ok)
    ok = bad == 0 and worst_mom <= 1e-10 and worst_norm <= 1e-10 and all(sandwich.values())
    report(10, ok, f"50 atoms: support failures {bad}, worst moment {worst_mom:.1e}, worst norm error "
                   f"{worst_norm:.1e}; sandwich {sandwich}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
