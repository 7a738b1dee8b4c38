"""Product singular-integral kernels: profiles, principal values, condition
checks and operator application."""

import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoprod import pasio as pa
from anisoprod.dilation import make_dilation
from anisoprod.errors import PVNotConvergent, ProfileNotMeanZero, ProfileNotPeriodic
from anisoprod.grid import Grid, GridFunction, write_agf

D2 = make_dilation(2.0)
W0 = 0.5  # half-width of the unit-volume interval


@pytest.fixture(scope="module")
def hilbert():
    return pa.kernel_from_spec("tensorcz:profile=sign", D2, D2)


def test_profiles_validated():
    rep = pa.check_profile(pa.profile_sign(D2), D2)
    assert rep["periodic"] and rep["mean_zero"]
    assert not pa.check_profile(pa.profile_one(D2), D2)["mean_zero"]
    with pytest.raises(ProfileNotMeanZero):
        pa.make_tensor_cz_kernel(D2, D2, "one")
    chirp = lambda x: np.sign(pa._pts(x, 1)[..., 0]) * np.cos(np.abs(pa._pts(x, 1)[..., 0]))  # noqa: E731
    with pytest.raises(ProfileNotPeriodic):
        pa.make_tensor_cz_kernel(D2, D2, chirp)


def test_kernel_closed_form_and_axes(hilbert):
    x1 = np.array([[0.3], [-1.7], [0.0]])
    x2 = np.array([[2.0], [0.25], [1.0]])
    expected = (W0 / x1[:2, 0]) * (W0 / x2[:2, 0])
    got = hilbert(x1, x2)
    assert np.allclose(got[:2], expected, rtol=1e-14)
    assert got[2] == 0.0


def test_kernel_homogeneity(hilbert):
    rng = np.random.default_rng(3)
    x1, x2 = rng.uniform(-5, 5, (50, 1)), rng.uniform(-5, 5, (50, 1))
    assert np.allclose(hilbert(2 * x1, x2), hilbert(x1, x2) / 2, rtol=1e-13)


def test_swapped_kernel():
    k = pa.make_tensor_cz_kernel(D2, D2, "sign", "logsine")
    x1, x2 = np.array([[0.7]]), np.array([[-1.3]])
    assert k.swapped()(x2, x1)[0] == pytest.approx(k(x1, x2)[0], rel=1e-15)


def test_pv_integral_closed_forms(hilbert):
    k1 = hilbert.factors[0]
    one = lambda z: np.ones_like(np.asarray(z, dtype=float))  # noqa: E731
    # PV int_{-1}^{2} (W0/z) dz = W0 log 2
    assert pa.pv_integral(k1, one, D2, -1.0, 2.0).value == pytest.approx(W0 * np.log(2), rel=1e-12)
    # int_{-1}^{1} (W0/z) z dz = 2 W0
    assert pa.pv_integral(k1, lambda z: np.asarray(z), D2, -1.0, 1.0).value == pytest.approx(2 * W0, rel=1e-12)
    # away from the origin no PV is needed: int_1^4 W0/z dz = W0 log 4
    assert pa.pv_integral(k1, one, D2, 1.0, 4.0).value == pytest.approx(W0 * np.log(4), rel=1e-12)


def test_pv_diverges_without_cancellation():
    k = pa.kernel_from_spec("tensorcz:profile=one", D2, D2)
    one = lambda z: np.ones_like(np.asarray(z, dtype=float))  # noqa: E731
    with pytest.raises(PVNotConvergent):
        pa.pv_integral(k.factors[0], one, D2, -1.0, 1.0)
    res = pa.pv_integral(k.factors[0], one, D2, -1.0, 1.0, raise_on_divergence=False)
    assert not res.converged


def test_bump_family_normalized():
    for f in pa.bump_family(D2, 3, 5, seed=2):
        assert f.derivative_bound(3) == pytest.approx(1.0, rel=1e-9)
        lo, hi = f.support
        assert -W0 <= lo and hi <= W0
    odd = pa.odd_bump(D2, 3)
    z = np.linspace(-0.5, 0.5, 10001)
    assert abs(np.trapezoid(odd(z), z)) <= 1e-12


def test_K1_constant_is_one(hilbert):
    rep = pa.check_K1(hilbert, 0, 0)
    assert rep.worst == pytest.approx(1.0, abs=1e-6)
    json.loads(rep.to_json())


def test_K2_ladder_is_cauchy(hilbert):
    rep = pa.check_K2(hilbert, pa.bump_family(D2, 3, 3), (-1, 1))
    assert rep.details["ladder_ratio"] <= 1 / D2.b + 0.1
    assert np.isfinite(rep.worst)


def test_K2_rejects_no_cancellation():
    k = pa.kernel_from_spec("tensorcz:profile=one", D2, D2)
    with pytest.raises(PVNotConvergent):
        pa.check_K2(k, pa.bump_family(D2, 3, 1), (0, 0))


def test_pairing_factored_and_tensor_routes_agree(hilbert):
    generic = pa.KernelModel(hilbert.dilations, hilbert.evaluator)
    f1, f2 = pa.bump_family(D2, 3, 4, seed=5)[2:]
    for k1, k2 in ((0, 0), (1, -1)):
        a = pa.pairing(hilbert, f1, f2, k1, k2)[0]
        b = pa.pairing(generic, f1, f2, k1, k2)[0]
        assert b == pytest.approx(a, rel=1e-3)


def test_partial_kernel_routes_agree(hilbert):
    generic = pa.KernelModel(hilbert.dilations, hilbert.evaluator)
    psi = pa.bump_family(D2, 3, 3, seed=1)[2]
    x = np.array([[0.4], [-1.1], [3.0]])
    a = pa.partial_kernel(hilbert, psi, 1)(x)
    b = pa.partial_kernel(generic, psi, 1)(x)
    assert np.allclose(a, b, rtol=1e-8)


def test_K3_finite(hilbert):
    rep = pa.check_K3(hilbert, pa.bump_family(D2, 3, 2), (-1, 1), s1=1)
    assert 0 < rep.worst < np.inf


def test_difference_conditions(hilbert):
    rep = pa.check_difference_conditions(hilbert, eps=(1.0, 1.0))
    assert np.isfinite(rep.worst) and rep.worst > 0
    assert {"single", "mixed", "partial", "swapped:single"} <= set(rep.details)
    with pytest.warns(RuntimeWarning, match="effectively"):
        pa.check_difference_conditions(hilbert, eps=(1.5, 1.5), spec=pa.SampleSpec((-1, 1), 2))


def test_lemma_difference_conditions_pass_for_smooth_kernel(hilbert):
    rep = pa.check_lemma_32_conditions(hilbert, 0, 0, spec=pa.SampleSpec((-2, 2), 3))
    assert np.isfinite(rep.worst)
    assert rep.details["eps"] == [pytest.approx(0.5 * D2.zeta_minus)] * 2


def test_smoothed_kernel_far_field_slope(hilbert):
    phis = [pa.odd_bump(D2, 5), pa.odd_bump(D2, 5, j=1)]
    rep = pa.smoothed_kernel_bound_check(hilbert, phis, (1, 0), (0, 1))
    for slope, expected in zip(rep.details["slopes"], rep.details["expected_slopes"]):
        assert slope == pytest.approx(expected, rel=0.1)
    assert all(v is not None for v in rep.details["regimes"].values())


def _test_field(grid):
    X = grid.points()
    return GridFunction(grid, np.exp(-np.sum(X ** 2, -1) / 2) * np.cos(3 * X[..., 0]))


def _odd_rational(x):
    return -2 * x / (1 + x ** 2) ** 2


def _odd_rational_image(x):
    # Hilbert transform of -2x/(1+x^2)^2 is (1-x^2)/(1+x^2)^2; p.v. W0/x is pi W0 H
    return np.pi * W0 * (1 - x ** 2) / (1 + x ** 2) ** 2


def test_factor_operator_matches_closed_form(hilbert):
    g = Grid.cube(1, 1024, 32.0)
    x = g.axis(0)
    f = GridFunction(g, _odd_rational(x))
    Tf = pa.apply_factor(hilbert.factors[0], f, "midpoint", "linear")
    assert np.max(np.abs(Tf.samples - _odd_rational_image(x))) <= 1e-3 * np.pi * W0


def test_cell_quadrature_converges_first_order(hilbert):
    errs = []
    for n in (1024, 2048):
        g = Grid.cube(1, n, 32.0)
        x = g.axis(0)
        Tf = pa.apply_factor(hilbert.factors[0], GridFunction(g, _odd_rational(x)), "cell", "linear")
        errs.append(np.max(np.abs(Tf.samples - _odd_rational_image(x))))
    assert 1.7 <= errs[0] / errs[1] <= 2.3


def test_product_operator_matches_closed_form(hilbert):
    g = Grid.cube(2, 256, 16.0)
    X = g.points()
    f = GridFunction(g, _odd_rational(X[..., 0]) * _odd_rational(X[..., 1]))
    ref = _odd_rational_image(X[..., 0]) * _odd_rational_image(X[..., 1])
    Tf = pa.apply_pasio(hilbert, f, mode="midpoint", boundary="linear").field
    assert np.max(np.abs(Tf.samples - ref)) <= 2e-3 * np.max(np.abs(ref))
    # the periodic box misses the kernel tail beyond the edge
    per = pa.apply_pasio(hilbert, f, mode="midpoint", boundary="periodic").field
    assert np.max(np.abs(per.samples - ref)) > np.max(np.abs(Tf.samples - ref))


def test_fft_and_dense_application_agree(hilbert):
    g = Grid.cube(2, 16, 4.0)
    f = _test_field(g)
    fast = pa.apply_pasio(hilbert, f, mode="node").field.samples
    slow = pa.dense_apply(hilbert, f, mode="node")
    assert np.allclose(fast, slow, atol=1e-12)


def test_truncation_gap(hilbert):
    # a slowly varying field loses little to the innermost shells
    g = Grid.cube(2, 512, 32.0)
    smooth = GridFunction(g, np.exp(-np.sum(g.points() ** 2, -1) / 50))
    res = pa.apply_pasio(hilbert, smooth, delta=(0.3, 0.3), mode="midpoint")
    assert 0 < res.gap < 0.1
    # an oscillating one does not, and the check says so
    g = Grid.cube(2, 64, 8.0)
    with pytest.raises(PVNotConvergent):
        pa.apply_pasio(hilbert, _test_field(g), delta=(0.6, 0.6), mode="midpoint")


def test_linear_boundary_close_to_periodic_for_localized_field(hilbert):
    g = Grid.cube(2, 64, 16.0)
    f = _test_field(g)
    per = pa.apply_pasio(hilbert, f, boundary="periodic").field.samples
    lin = pa.apply_pasio(hilbert, f, boundary="linear").field.samples
    assert np.linalg.norm(per - lin) <= 0.1 * np.linalg.norm(lin)


def test_kernel_specs(tmp_path, hilbert):
    z = pa.kernel_from_spec("zero", D2, D2)
    assert z(np.array([[1.0]]), np.array([[2.0]]))[0] == 0.0
    g = Grid.cube(2, 64, 4.0)
    samples = pa.sampled_kernel_grid(hilbert, g, "node")
    write_agf(tmp_path / "k.agf", GridFunction(g, samples))
    k = pa.kernel_from_spec(str(tmp_path / "k.agf"), D2, D2)
    x1, x2 = g.axis(0)[40], g.axis(1)[20]
    assert k(np.array([[x1]]), np.array([[x2]]))[0] == pytest.approx(hilbert(np.array([[x1]]), np.array([[x2]]))[0])
    with pytest.raises(ValueError):
        pa.sampled_kernel_grid(hilbert, g, "bogus")


@settings(max_examples=15)
@given(lo=st.floats(-3.0, -0.1), hi=st.floats(0.1, 3.0))
def test_pv_log_formula(lo, hi):
    k1 = pa.make_tensor_cz_kernel(D2, D2).factors[0]
    one = lambda z: np.ones_like(np.asarray(z, dtype=float))  # noqa: E731
    assert pa.pv_integral(k1, one, D2, lo, hi).value == pytest.approx(W0 * np.log(hi / -lo), abs=1e-10)
