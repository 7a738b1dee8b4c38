"""Experiment configuration, runners and their outputs."""

import json

import numpy as np
import pytest

from anisoprod.config import ExperimentConfig, default_config, load_config, parse_config
from anisoprod.errors import PVNotConvergent, WindowTooSmall
from anisoprod.experiments import (
    decay_rate,
    function_family,
    run_experiment,
    run_norm_equivalence,
    run_t11,
    run_t12_decay,
    t12_masses_2d,
)
from anisoprod.dilation import make_dilation

SMALL = dict(N=(64, 128), L=16.0, count=3)


def small(name, **kw):
    return default_config(name, **dict(SMALL, **kw))


def small_norm(**kw):
    # the Calderon window needs a few certified scales on both grids
    return default_config("norm_equivalence", **dict(N=(128, 256), L=32.0, window=(2, 3), count=3, **kw))


def t12_small(**kw):
    base = dict(N=(512,), L=32.0, gamma_max=1, window=(-10, 10), cube_level=3)
    base.update(kw)
    return default_config("t12_decay", **base)


def test_parse_config_sections_and_types():
    text = """
    # shared
    p = 3
    N = 64, 128
    weights = one; power:alpha1=0.2,alpha2=0.1
    [t11]
    p = 4
    check_kernel = no
    [norm_equivalence]
    p = 1.5
    """
    cfg = parse_config(text, "t11")
    assert cfg.p == 4.0 and cfg.N == (64, 128) and cfg.check_kernel is False
    assert cfg.weights == ("one", "power:alpha1=0.2,alpha2=0.1")
    assert parse_config(text, "norm_equivalence").p == 1.5


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        parse_config("colour = red", "t11")
    with pytest.raises(ValueError):
        parse_config("window = 3, 1", "t11")
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="nope")


def test_load_config_and_round_trip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("experiment = t12_decay\ngamma_max = 3\n")
    cfg = load_config(path)
    assert cfg.experiment == "t12_decay" and cfg.gamma_max == 3 and cfg.mode == "cell"
    again = ExperimentConfig(**json.loads(cfg.to_json()))
    assert again == cfg
    assert cfg.replace(seed=None, p=2).p == 2.0


def test_function_family_seeded():
    cfg = small("t11")
    x = np.random.default_rng(0).normal(size=(10, 2))
    a = [f(x) for f in function_family(cfg)]
    b = [f(x) for f in function_family(cfg)]
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    c = [f(x) for f in function_family(cfg.replace(seed=1))]
    assert not np.allclose(a[0], c[0])


def test_norm_equivalence_small():
    res = run_norm_equivalence(small_norm())
    assert res.summary["passed"]
    rows = [r for r in res.rows if r["f_id"] != "summary"]
    assert len(rows) == 2 * 2 * 3
    assert all(r["norm_f"] > 0 and r["ratio_S"] > 0 for r in rows)


def test_norm_equivalence_zero_family():
    res = run_norm_equivalence(small_norm(family="zero"))
    rows = [r for r in res.rows if r["f_id"] != "summary"]
    assert all(r["norm_f"] == 0 and r["norm_S"] == 0 for r in rows)
    assert all(np.isnan(r["ratio_S"]) for r in rows)


def test_norm_equivalence_needs_p_above_one():
    with pytest.raises(ValueError):
        run_norm_equivalence(small_norm(p=1.0))


def test_t11_small_and_p4():
    res = run_t11(small("t11"))
    assert res.summary["passed"] and res.summary["preconditions"]["K1"] == pytest.approx(1.0, abs=1e-6)
    res4 = run_t11(small("t11", p=4.0, check_kernel=False, N=(64,)))
    assert np.isfinite(res4.summary["sup_ratio"])


def test_t11_rejects_kernel_without_cancellation():
    with pytest.raises(PVNotConvergent):
        run_t11(small("t11", kernel="tensorcz:profile=one"))


def test_decay_rate_formula():
    d = make_dilation(2.0)
    assert decay_rate(d, 1.0, 1, 1.001) == pytest.approx(d.zeta_minus + 1 - 1.001)
    assert decay_rate(d, 2.0, 1, 1.001, shift=1) == pytest.approx(2 * (2 * d.zeta_minus + 1) - 1.001)


def test_t12_small_masses():
    res = run_t12_decay(t12_small())
    masses = [r["mass"] for r in res.rows if r["gamma"] != "fit"]
    assert masses[0] > 0 and masses[1] < masses[0]
    assert res.summary["r"] == pytest.approx(1.001)


def test_t12_zero_atom_skips_fit():
    res = run_t12_decay(t12_small(zero_atom=True))
    masses = [r["mass"] for r in res.rows if r["gamma"] != "fit"]
    assert all(m == 0 for m in masses)
    assert res.summary["slope"] is None and res.summary["fit"].startswith("skipped")


def test_t12_separable_route_matches_product_grid():
    cfg = t12_small()
    sep = [r["mass"] for r in run_t12_decay(cfg).rows if r["gamma"] != "fit"]
    direct = t12_masses_2d(cfg)
    assert np.allclose(sep, direct, rtol=1e-6)


def test_t12_box_too_small():
    with pytest.raises(WindowTooSmall):
        run_t12_decay(t12_small(gamma_max=6))


def test_results_written_and_deterministic(tmp_path):
    cfg = small("t11", N=(64,), check_kernel=False)
    a = run_experiment(cfg)
    b = run_experiment(cfg.replace(threads=2))
    assert a.csv_text() == b.csv_text()
    paths = a.write(tmp_path)
    manifest = json.loads((tmp_path / "t11.manifest.json").read_text())
    assert manifest["config"]["N"] == [64]
    assert "numpy" in json.dumps(manifest)
    assert (tmp_path / "t11.csv").read_text() == a.csv_text()
    assert set(paths) >= {"csv", "manifest"}
