"""Calderon pairs: reproducing identity, filter relations, moments, annulus bound."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoprod.calderon import (
    annulus_lower_bound_check,
    build_calderon_pair,
    certified_scales,
    identity_residual,
    moment_check,
    profile_energy,
    shell_profile,
    transition,
)
from anisoprod.dilation import make_dilation
from anisoprod.errors import EmptyShell, ResolutionTooCoarse
from anisoprod.grid import Grid, GridFunction
from anisoprod.transforms import convolve


@pytest.fixture(scope="module")
def dyadic_pair():
    return build_calderon_pair(make_dilation(2.0), 3, Grid.cube(1, 1024, 32.0))


def test_transition_endpoints_and_monotone():
    t = np.linspace(-0.5, 1.5, 401)
    v = transition(t)
    assert v[0] == 0.0 and v[-1] == 1.0
    assert np.all(np.diff(v) >= 0)
    # symmetric about 1/2
    assert np.allclose(transition(0.3) + transition(0.7), 1.0, atol=1e-15)


def test_profile_energy_bounds():
    u = np.linspace(-3, 3, 2001)
    E = profile_energy(u)
    assert np.all(E >= 1 - 1e-12) and np.all(E <= 2 + 1e-12)
    assert np.allclose(profile_energy(u + 1), E)
    assert shell_profile(np.array([-1.0, 3.0])).tolist() == [0.0, 0.0]


@pytest.mark.parametrize(
    "matrix, grid",
    [
        (2.0, Grid.cube(1, 1024, 32.0)),
        (np.diag([2.0, 2.0]), Grid.cube(2, 128, 16.0)),
        (np.diag([1.5, 4.0]), Grid.cube(2, 256, 16.0)),
    ],
)
def test_identity_holds(matrix, grid):
    d = make_dilation(matrix)
    pair = build_calderon_pair(d, 1, grid, min_cells=4)
    assert pair.identity_residual <= 1e-8
    res, _ = identity_residual(pair)
    assert res == pair.identity_residual


def test_unbalanced_variant_identity():
    pair = build_calderon_pair(make_dilation(2.0), 1, Grid.cube(1, 1024, 32.0), variant="unbalanced")
    assert pair.identity_residual <= 1e-8
    assert not np.allclose(pair.psi_hat.samples, pair.theta_hat.samples)


def test_identity_residual_does_not_grow_under_refinement():
    d = make_dilation(2.0)
    coarse = build_calderon_pair(d, 1, Grid.cube(1, 512, 32.0))
    fine = build_calderon_pair(d, 1, Grid.cube(1, 1024, 32.0))
    assert fine.identity_residual <= max(coarse.identity_residual, 1e-14)
    assert fine.scales[0] <= coarse.scales[0]


def test_phi_squared_is_psi(dyadic_pair):
    assert np.max(np.abs(dyadic_pair.phi_hat.samples ** 2 - dyadic_pair.psi_hat.samples)) <= 1e-14


def test_phi_convolved_with_itself_is_psi(dyadic_pair):
    phi = dyadic_pair.space_kernel("phi", 0)
    psi = dyadic_pair.space_kernel("psi", 0)
    diff = convolve(phi, phi).samples - psi.samples
    assert np.max(np.abs(diff)) <= 1e-8 * np.max(np.abs(psi.samples))


def test_filter_scale_covariance(dyadic_pair):
    xi = dyadic_pair.grid.freq_points()
    for k in (-2, 1, 3):
        direct = dyadic_pair.psi_hat_at(xi * 2.0 ** k)
        assert np.allclose(dyadic_pair.filter("psi", k), direct, atol=1e-13)


def test_origin_is_outside_every_shell(dyadic_pair):
    assert dyadic_pair.psi_hat_at(np.zeros((1, 1)))[0] == 0.0


def test_moments_of_psi_vanish_on_large_box():
    pair = build_calderon_pair(make_dilation(2.0), 3, Grid.cube(1, 16384, 1024.0))
    psi = pair.space_kernel("psi", 0)
    assert moment_check(psi, 3, relative=True) <= 1e-8


def test_moment_check_oracles():
    grid = Grid.cube(1, 2048, 16.0)
    x = grid.points()[..., 0]
    odd = GridFunction(grid, x * np.exp(-x ** 2))
    assert moment_check(odd, 0) <= 1e-14
    gauss = GridFunction(grid, np.exp(-np.pi * x ** 2))
    assert abs(moment_check(gauss, 0) - 1.0) <= 1e-12
    # second moment of exp(-pi x^2) is 1/(2 pi)
    assert abs(moment_check(gauss, 2) - 1.0) <= 1e-12
    assert abs(moment_check(gauss, 2, relative=True) - 1.0) <= 1e-12


def test_moment_check_rejects_frequency_field(dyadic_pair):
    with pytest.raises(ValueError):
        moment_check(dyadic_pair.psi_hat, 1)


def test_annulus_lower_bound(dyadic_pair):
    dual = dyadic_pair.dual
    b = dual.b
    assert annulus_lower_bound_check(dyadic_pair.theta_hat, (1.0, b), dual) >= 0.5
    assert annulus_lower_bound_check(dyadic_pair.theta_hat, (b ** 3, b ** 4), dual) == 0.0
    with pytest.raises(EmptyShell):
        annulus_lower_bound_check(dyadic_pair.theta_hat, (1e9, 2e9), dual)


def test_coarse_grid_is_rejected():
    d = make_dilation(2.0)
    with pytest.raises(ResolutionTooCoarse):
        certified_scales(d, Grid.cube(1, 8, 1.0))
    with pytest.raises(ResolutionTooCoarse):
        build_calderon_pair(d, 1, Grid.cube(1, 1024, 32.0, staggered=True))


@settings(max_examples=10)
@given(a=st.floats(1.3, 4.0), c=st.floats(1.3, 4.0))
def test_identity_for_random_diagonal(a, c):
    d = make_dilation(np.diag([a, c]))
    pair = build_calderon_pair(d, 0, Grid.cube(2, 128, 8.0), min_cells=2)
    assert pair.identity_residual <= 1e-8
