import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoprod.dilation import (ball_membership, check_ball_sum_law, continuous_quasi_norm, dilation_from_json,
                                dilation_to_json, log_quasi_norm, make_dilation, quasi_norm, sample_ball,
                                sample_outside, shell_index, unit_ball_volume)
from anisoprod.errors import NonFinite, NotExpansive

from conftest import multiscale_points, random_expansive


def test_dyadic_line():
    d = make_dilation([[2]])
    assert d.b == 2 and d.sigma == 1
    # Delta = (-1/2, 1/2)
    assert d.c / d.P[0, 0] == pytest.approx(0.25, rel=1e-12)


def test_scalar_plane_is_unit_area_disk():
    d = make_dilation(2 * np.eye(2))
    assert d.b == 4
    assert np.allclose(d.P / d.P[0, 0], np.eye(2))
    radius = math.sqrt(d.c / d.P[0, 0])
    assert radius == pytest.approx(1 / math.sqrt(math.pi), rel=1e-10)


def test_contraction_identity_and_volume():
    d = make_dilation(np.diag([1.5, 4.0]))
    assert d.b == 6
    lhs = d.inverse.T @ d.P @ d.inverse
    assert np.allclose(lhs, d.P - np.eye(2), atol=1e-12)
    vol = d.c ** (d.dim / 2) * unit_ball_volume(d.dim) / math.sqrt(np.linalg.det(d.P))
    assert vol == pytest.approx(1.0, rel=1e-10)


def test_containment_chain(rng):
    d = make_dilation(np.diag([1.5, 4.0]))
    t = rng.uniform(0, 2 * np.pi, 1000)
    dirs = np.stack([np.cos(t), np.sin(t)], -1)
    # boundary of Delta along each direction
    rad = np.sqrt(d.c / np.einsum("ni,ij,nj->n", dirs, d.P, dirs))
    boundary = dirs * rad[:, None] * (1 - 1e-12)
    r = d.expansion_ratio
    assert np.all(~ball_membership(d, (boundary / (1 - 1e-12) * (1 + 1e-12)) @ d.matrix.T / r, 0))
    assert np.all(ball_membership(d, r * boundary, 1))


def test_not_expansive_and_nonfinite():
    with pytest.raises(NotExpansive):
        make_dilation([[1, 1], [0, 1]])
    with pytest.raises(NonFinite):
        make_dilation([[np.nan]])


def test_membership_examples():
    d = make_dilation([[2]])
    assert ball_membership(d, 0.3, 0)
    assert not ball_membership(d, 0.3, -1)
    assert all(ball_membership(d, 0.0, k) for k in range(-20, 20))


def test_membership_monotone(rng):
    d = make_dilation(random_expansive(rng, 2))
    x = multiscale_points(rng, 2, 10000)
    k = rng.integers(-6, 6, 10000)
    inside = np.array([ball_membership(d, xi, int(ki)) for xi, ki in zip(x[:500], k[:500])])
    above = np.array([ball_membership(d, xi, int(ki) + 1) for xi, ki in zip(x[:500], k[:500])])
    assert np.all(above[inside])


def test_quasi_norm_examples():
    d = make_dilation([[2]])
    assert quasi_norm(d, 0.0) == 0.0
    assert quasi_norm(d, 0.3) == 0.5
    # shell B_{k+1} \ B_k of the dyadic line is 2^{k-1} <= |x| < 2^k
    for x, expect in ((0.5, 1.0), (0.49, 0.5), (3.0, 4.0), (-3.0, 4.0)):
        assert quasi_norm(d, x) == expect


def test_quasi_norm_homogeneity_exact(rng):
    d = make_dilation(random_expansive(rng, 3))
    x = multiscale_points(rng, 3, 10000)
    # shell indices shift by exactly one; values agree up to the rounding of b^k
    assert np.array_equal(shell_index(d, x @ d.matrix.T), shell_index(d, x) + 1)
    assert np.allclose(quasi_norm(d, x @ d.matrix.T), d.b * quasi_norm(d, x), rtol=1e-13, atol=0)


def test_quasi_triangle_with_max(rng):
    d = make_dilation(random_expansive(rng, 2))
    x = multiscale_points(rng, 2, 10000)
    y = multiscale_points(rng, 2, 10000)
    H = d.b ** d.sigma
    assert np.all(quasi_norm(d, x + y) <= H * np.maximum(quasi_norm(d, x), quasi_norm(d, y)))


def test_scalar_dilation_matches_power_of_euclidean_norm(rng):
    # for A = 2 I_n the quasi-norm is |x|^n up to one shell
    for n in (1, 2, 3):
        d = make_dilation(2 * np.eye(n))
        x = multiscale_points(rng, n, 2000)
        ratio = quasi_norm(d, x) / (unit_ball_volume(n) * np.linalg.norm(x, axis=1) ** n)
        assert ratio.min() >= 1 / d.b - 1e-12 and ratio.max() <= 1 + 1e-12


def test_continuous_quasi_norm_linear_on_line():
    d = make_dilation([[2]])
    x = np.linspace(-5, 5, 101)
    w0 = math.sqrt(d.c / d.P[0, 0])
    assert np.allclose(continuous_quasi_norm(d, x), np.abs(x) / w0, rtol=1e-12)


def test_log_quasi_norm_shift(rng):
    d = make_dilation(np.array([[2.0, 1.0], [0.0, 3.0]]))
    x = multiscale_points(rng, 2, 500)
    assert np.allclose(log_quasi_norm(d, x @ d.matrix.T), log_quasi_norm(d, x) + 1, atol=1e-9)


def test_sum_law_examples():
    d = make_dilation([[2]])
    assert check_ball_sum_law(d, 0, 0, 1000, 0)
    assert check_ball_sum_law(d, 3, -2, 1000, 1)
    assert check_ball_sum_law(d, 0, 0, 1)


def test_sum_law_detects_wrong_sigma(rng):
    d = make_dilation(np.diag([2.0, 3.0]))
    bad = make_dilation(np.diag([2.0, 3.0]))
    object.__setattr__(bad, "sigma", 0)
    assert check_ball_sum_law(d, 0, 0, 2000, 0)
    res = check_ball_sum_law(bad, 0, 0, 2000, 0)
    assert not res and res.witness is not None


def test_sampling_stays_in_place(rng):
    d = make_dilation(np.diag([1.5, 4.0]))
    assert np.all(ball_membership(d, sample_ball(d, 2, 1000, rng), 2))
    assert not np.any(ball_membership(d, sample_outside(d, 2, 1000, rng), 2))


def test_json_round_trip_and_reproducibility():
    d = make_dilation(np.array([[2.0, 1.0], [0.5, 3.0]]))
    doc = json.loads(dilation_to_json(d))
    assert set(doc) >= {"matrix", "b", "P", "c", "r", "sigma", "lambda_minus", "lambda_plus"}
    d2 = dilation_from_json(dilation_to_json(d))
    assert np.array_equal(d2.P, d.P) and d2.sigma == d.sigma and d2.expansion_ratio == d.expansion_ratio


@given(st.floats(1.1, 5.0), st.floats(1.1, 5.0), st.integers(-4, 4))
def test_property_diagonal_axioms(a1, a2, k):
    d = make_dilation(np.diag([a1, a2]))
    assert d.sigma >= 1
    assert 1 < d.lambda_minus < min(a1, a2) <= max(a1, a2) < d.lambda_plus
    rng = np.random.default_rng(k + 10)
    x = sample_ball(d, k, 200, rng)
    assert np.all(quasi_norm(d, x) < d.b ** k)
    assert np.all(quasi_norm(d, x) > 0)


@given(st.integers(0, 10_000))
def test_property_triangle_random_matrices(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    d = make_dilation(random_expansive(rng, n))
    x, y = multiscale_points(rng, n, 300), multiscale_points(rng, n, 300)
    rx, ry = quasi_norm(d, x), quasi_norm(d, y)
    assert np.all(quasi_norm(d, x + y) <= d.b ** d.sigma * (rx + ry))
