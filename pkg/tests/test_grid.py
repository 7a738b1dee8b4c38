"""Grid geometry, FFT conventions and the AGF1 binary format."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoprod.errors import FormatError, GridMismatch
from anisoprod.grid import Grid, GridFunction, fourier, inverse_fourier, read_agf, write_agf


def test_nodes_and_origin():
    g = Grid.cube(1, 8, 2.0)
    assert np.allclose(g.axis(0), -2.0 + 0.5 * np.arange(8))
    assert g.axis(0)[g.origin_index[0]] == 0.0
    s = Grid.cube(1, 8, 2.0, staggered=True)
    assert np.allclose(s.axis(0), g.axis(0) + 0.25)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((6,), (1.0,))
    with pytest.raises(ValueError):
        Grid((8, 8), (1.0, 2.0, 3.0))
    assert Grid((8, 16), 3.0).L == (3.0, 3.0)


def test_sub_grid():
    g = Grid((8, 16, 32), (1.0, 2.0, 3.0))
    assert g.sub((0, 2)) == Grid((8, 32), (1.0, 3.0))


def test_gaussian_is_self_dual():
    g = Grid.cube(2, 128, 6.0)
    f = GridFunction.from_function(g, lambda x: np.exp(-np.pi * np.sum(x ** 2, -1)))
    F = fourier(f)
    xi = g.freq_points()
    assert np.max(np.abs(F.samples - np.exp(-np.pi * np.sum(xi ** 2, -1)))) <= 1e-12


def test_shift_theorem_sign():
    # f(x - a) has transform exp(-2 pi i a xi) f^(xi)
    g = Grid.cube(1, 256, 16.0)
    x = g.axis(0)
    a = 1.5
    F = fourier(GridFunction(g, np.exp(-np.pi * (x - a) ** 2)))
    xi = g.freq_axis(0)
    assert np.max(np.abs(F.samples - np.exp(-2j * np.pi * a * xi) * np.exp(-np.pi * xi ** 2))) <= 1e-12


def test_fft_rejects_staggered_grid():
    g = Grid.cube(1, 16, 1.0, staggered=True)
    with pytest.raises(GridMismatch):
        fourier(GridFunction(g, np.ones(16)))


def test_samples_shape_checked():
    with pytest.raises(GridMismatch):
        GridFunction(Grid.cube(1, 16, 1.0), np.ones(8))


@given(seed=st.integers(0, 2 ** 16), n=st.sampled_from([8, 16, 32]))
def test_fourier_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    g = Grid((n, 2 * n), (1.5, 3.0))
    f = GridFunction(g, rng.standard_normal(g.shape))
    back = inverse_fourier(fourier(f), real=True)
    assert np.allclose(back.samples, f.samples, atol=1e-12)


@pytest.mark.parametrize("complex_", [False, True])
@pytest.mark.parametrize("staggered", [False, True])
def test_agf_round_trip(tmp_path, complex_, staggered):
    rng = np.random.default_rng(1)
    g = Grid((8, 4), (1.0, 2.5), staggered)
    data = rng.standard_normal(g.shape)
    if complex_:
        data = data + 1j * rng.standard_normal(g.shape)
    f = GridFunction(g, data)
    path = tmp_path / "f.agf"
    f.save(path)
    h = GridFunction.load(path)
    assert h.grid == g and h.domain == "space"
    assert np.array_equal(h.samples, data)


def test_agf_frequency_domain(tmp_path):
    g = Grid.cube(1, 16, 2.0)
    F = fourier(GridFunction(g, np.arange(16.0)))
    write_agf(tmp_path / "F.agf", F)
    back = read_agf(tmp_path / "F.agf")
    assert back.domain == "frequency"
    assert np.array_equal(back.samples, F.samples)


def test_agf_header_layout(tmp_path):
    g = Grid.cube(1, 4, 1.0)
    write_agf(tmp_path / "f.agf", GridFunction(g, np.arange(4.0)))
    raw = (tmp_path / "f.agf").read_bytes()
    assert raw[:4] == b"AGF1"
    assert len(raw) == 4 + 4 + 4 + 8 + 2 + 4 * 8


def test_agf_rejects_bad_files(tmp_path):
    g = Grid.cube(1, 4, 1.0)
    path = tmp_path / "f.agf"
    write_agf(path, GridFunction(g, np.arange(4.0)))
    raw = path.read_bytes()
    (tmp_path / "magic.agf").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.agf").write_bytes(raw[:-3])
    for name in ("magic.agf", "short.agf"):
        with pytest.raises(FormatError):
            read_agf(tmp_path / name)
