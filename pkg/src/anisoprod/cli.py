"""Command-line entry point.

Every subcommand prints a JSON document (or writes files under ``--out``).
Usage and input errors exit with status 2; numerical failures exit with
status 1 and print the error class name to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import atoms as at
from . import pasio as pa
from .bump import decompose_bump, gaussian_difference, is_normalized_bump
from .calderon import build_calderon_pair, moment_check
from .config import EXPERIMENTS, default_config, load_config
from .dilation import check_ball_sum_law, dilation_to_json, make_dilation, parse_matrix
from .errors import AnisoprodError
from .experiments import _clean, gabor_function, run_experiment
from .grid import Grid, GridFunction, read_agf, write_agf
from .weights import ap_constant_estimate, product_ap_estimate, weight_from_spec, WeightField


class UsageError(Exception):
    pass


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _dilation(text: str, dim=None):
    return make_dilation(parse_matrix(text, dim))


def _emit(obj, args, name: str) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text + "\n", encoding="utf-8")
    print(text)


# -- subcommands -------------------------------------------------------------------


def cmd_dilation(args) -> int:
    d = _dilation(args.matrix, args.dim)
    doc = json.loads(dilation_to_json(d))
    if args.sum_law:
        rng = np.random.default_rng(args.seed)
        doc["sum_law"] = [{"k": k, "l": l, "ok": bool(check_ball_sum_law(d, k, l, args.sum_law, rng))}
                          for k in range(-2, 3) for l in range(-2, 3)]
    _emit(doc, args, "dilation")
    return 0


def _weight_field(spec: str, dils, grid):
    if spec.endswith(".agf"):
        return WeightField(read_agf(spec), tuple(dils))
    return weight_from_spec(spec, tuple(dils) if len(dils) > 1 else dils[0], grid)


def cmd_weights(args) -> int:
    dils = [_dilation(args.matrix)] + ([_dilation(args.matrix2)] if args.matrix2 else [])
    dim = sum(d.dim for d in dils)
    grid = Grid.cube(dim, args.N, args.L)
    w = _weight_field(args.weight, dils, grid)
    k = _ints(args.k_range)
    if len(dils) == 1:
        est = ap_constant_estimate(w, args.p, k, translates=args.translates)
    else:
        est = product_ap_estimate(w, args.p, (k, k), translates=args.translates)
    _emit({"weight": args.weight, "p": args.p, "estimate": est.value, "trend": est.trend,
           "window": list(k), "skipped": est.skipped}, args, "weights")
    return 0


def cmd_calderon(args) -> int:
    d = _dilation(args.matrix)
    grid = Grid.cube(d.dim, args.N, args.L)
    pair = build_calderon_pair(d, args.s, grid, tol=args.tol, variant=args.variant, min_cells=args.min_cells)
    doc = {"scales": list(pair.scales), "annulus": list(pair.annulus), "identity_residual": pair.identity_residual,
           "variant": pair.variant,
           "psi_moment": moment_check(pair.space_kernel("psi"), args.s, relative=True)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for kind in ("psi", "theta", "phi"):
            write_agf(out / f"{kind}_hat.agf", getattr(pair, f"{kind}_hat"))
    _emit(doc, args, "calderon")
    return 0


def _psi_field(spec: str, grid: Grid) -> GridFunction:
    if spec.endswith(".agf"):
        return read_agf(spec)
    name, _, rest = spec.partition(":")
    params = dict(item.split("=") for item in filter(None, rest.split(",")))
    if name != "gaussdiff":
        raise UsageError(f"unknown psi family {name!r}")
    return gaussian_difference(grid, float(params.get("s1", 0.25)), float(params.get("s2", 0.5)))


def cmd_decompose(args) -> int:
    d = _dilation(args.matrix)
    grid = Grid.cube(d.dim, args.grid_N, args.L)
    psi = _psi_field(args.psi, grid)
    dec = decompose_bump(psi, d, args.M, args.N, args.k_max)
    slope, _ = dec.d_decay_fit()
    checks = [is_normalized_bump(t.like(t.samples / dec.c), d, args.N, k).ok for k, t in enumerate(dec.terms)]
    if args.out:
        dec.save(args.out)
    _emit({"M": dec.M, "N": dec.N, "c": dec.c, "k_max": dec.k_max,
           "reconstruction_error": dec.reconstruction_error(), "psi_sup": psi.sup(), "d_slope": slope,
           "bump_checks_passed": all(checks), "audit": dec.audit}, args, "decompose")
    return 0


def _kernel(args):
    d1 = _dilation(args.matrix)
    d2 = _dilation(args.matrix2 or args.matrix)
    return pa.kernel_from_spec(args.kernel, d1, d2)


def cmd_kernel_check(args) -> int:
    kern = _kernel(args)
    s1, s2 = _ints(args.orders)
    spec = pa.SampleSpec(seed=args.seed)
    d1, d2 = kern.dilations
    if args.cond == "K1":
        rep = pa.check_K1(kern, s1, s2, spec)
    elif args.cond == "K2":
        rep = pa.check_K2(kern, pa.bump_family(d1, kern.N[0], count=4, seed=args.seed), k_range=(-2, 2))
    elif args.cond == "K3":
        rep = pa.check_K3(kern, pa.bump_family(d1, kern.N[0], count=3, seed=args.seed), k_range=(-2, 2), s1=s1)
    elif args.cond == "difference":
        rep = pa.check_difference_conditions(kern)
    elif args.cond == "lemma32":
        rep = pa.check_lemma_32_conditions(kern, s1, s2)
    else:
        phis = [pa.odd_bump(d1, kern.N[0]), pa.odd_bump(d2, kern.N[1])]
        rep = pa.smoothed_kernel_bound_check(kern, phis)
    text = rep.to_json()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"condition_{args.cond}.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _input_field(args, grid: Grid) -> GridFunction:
    if args.input:
        return read_agf(args.input)
    return GridFunction.from_function(grid, gabor_function(args.seed, grid.dim))


def cmd_apply(args) -> int:
    kern = _kernel(args)
    grid = Grid.cube(sum(d.dim for d in kern.dilations), args.N, args.L)
    f = _input_field(args, grid)
    res = pa.apply_pasio(kern, f, delta=tuple(float(v) for v in args.delta.split(",")), mode=args.mode,
                         boundary=args.boundary)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_agf(out / "Tf.agf", res.field)
    l2 = lambda g: float(np.sqrt(np.sum(np.abs(g.samples) ** 2) * g.grid.cell_volume))  # noqa: E731
    _emit({"kernel": args.kernel, "mode": args.mode, "boundary": args.boundary, "gap": res.gap,
           "norm_f": l2(f), "norm_Tf": l2(res.field)}, args, "apply")
    return 0


def cmd_atoms(args) -> int:
    d1 = _dilation(args.matrix)
    d2 = _dilation(args.matrix2 or args.matrix)
    rng = np.random.default_rng(args.seed)
    g1, g2 = at.christ_cubes(d1), at.christ_cubes(d2)
    sandwich = {}
    for name, g in (("factor1", g1), ("factor2", g2)):
        cubes = [c for k in range(-2, 3) for c in g.cubes_near(k, np.zeros(g.dim), 4)]
        rep = at.sandwich_check(g, cubes, samples=args.samples, rng=rng)
        sandwich[name] = {"v": g.v, "u": g.u, "cubes": rep.cubes, "points": rep.points,
                          "inner_violations": rep.inner_violations, "outer_violations": rep.outer_violations}
    grid = Grid((args.N,) * (d1.dim + d2.dim), (args.L,) * (d1.dim + d2.dim))
    rect = at.Rect(g1.cube(args.level, [0] * d1.dim), g2.cube(args.level, [0] * d2.dim))
    s = _ints(args.s)
    certs = []
    for i in range(args.count):
        f = GridFunction(grid, rng.standard_normal(grid.shape))
        atom = at.make_rectangular_atom(f, rect, (args.p, args.q, s))
        cert = at.certify_atom(atom)
        certs.append(cert.to_dict())
        if args.out and i == 0:
            atom.save(Path(args.out) / "atom_000")
    _emit({"sandwich": sandwich, "atoms": len(certs), "all_ok": all(c["ok"] for c in certs),
           "max_moment_residual": max(c["moment_residual"] for c in certs),
           "max_norm_error": max(abs(c["norm_ratio"] - 1.0) for c in certs)}, args, "atoms")
    return 0


def cmd_experiment(args) -> int:
    if args.config:
        cfg = load_config(args.config, args.name)
    elif args.name:
        cfg = default_config(args.name)
    else:
        raise UsageError("experiment needs --config or --name")
    cfg = cfg.replace(seed=args.seed_given, threads=args.threads_given, out=args.out or None)
    result = run_experiment(cfg)
    paths = result.write(cfg.out)
    print(result.csv_text(), end="")
    print(json.dumps(_clean({"summary": result.summary, "files": paths}), indent=2, sort_keys=True))
    return 0


COMMANDS = {"dilation": cmd_dilation, "weights": cmd_weights, "calderon": cmd_calderon,
            "decompose": cmd_decompose, "kernel-check": cmd_kernel_check, "apply": cmd_apply,
            "atoms": cmd_atoms, "experiment": cmd_experiment}


# -- parser --------------------------------------------------------------------------


def _global_flags(parser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="key = value config file")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisoprod", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    def add(name, help):
        return sub.add_parser(name, parents=[common], help=help)

    p = add("dilation", "dilation invariants as JSON")
    p.add_argument("--matrix", required=True, help='"2", "1.5,4" (diagonal) or "2,1;0,3" (rows)')
    p.add_argument("--dim", type=int)
    p.add_argument("--sum-law", type=int, default=0, metavar="SAMPLES", help="also check ball sum laws")

    p = add("weights", "sampled A_p constant of a weight")
    p.add_argument("--matrix", default="2")
    p.add_argument("--matrix2", help="second factor; gives the product estimate")
    p.add_argument("--weight", default="one", help='family spec such as "power:alpha=0.5" or an .agf file')
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--N", type=int, default=1024)
    p.add_argument("--L", type=float, default=64.0)
    p.add_argument("--k-range", default="-4,4")
    p.add_argument("--translates", type=int, default=32)

    p = add("calderon", "build a Calderon pair and report its certified range")
    p.add_argument("--matrix", default="2")
    p.add_argument("--s", type=int, default=3)
    p.add_argument("--N", type=int, default=1024)
    p.add_argument("--L", type=float, default=64.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--variant", default="symmetric", choices=("symmetric", "unbalanced"))
    p.add_argument("--min-cells", type=int, default=8)

    p = add("decompose", "split a mean-zero function into normalized bumps")
    p.add_argument("--matrix", default="2")
    p.add_argument("--psi", default="gaussdiff:s1=0.25,s2=0.5", help="gaussdiff:s1=..,s2=.. or an .agf file")
    p.add_argument("--M", type=float, default=4.0)
    p.add_argument("--N", type=int, default=3, help="bump smoothness order")
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--grid-N", type=int, default=131072)
    p.add_argument("--L", type=float, default=64.0)

    p = add("kernel-check", "sampled condition report of a product kernel")
    p.add_argument("--kernel", default="tensorcz:profile=sign")
    p.add_argument("--matrix", default="2")
    p.add_argument("--matrix2")
    p.add_argument("--cond", default="K1", choices=("K1", "K2", "K3", "difference", "lemma32", "smoothed"))
    p.add_argument("--orders", default="0,0")

    p = add("apply", "apply a product kernel to a grid function")
    p.add_argument("--kernel", default="tensorcz:profile=sign")
    p.add_argument("--matrix", default="2")
    p.add_argument("--matrix2")
    p.add_argument("--input", help="AGF1 input field (default: a seeded Gabor sum)")
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--L", type=float, default=32.0)
    p.add_argument("--delta", default="0,0")
    p.add_argument("--mode", default="midpoint", choices=("midpoint", "cell", "node"))
    p.add_argument("--boundary", default="periodic", choices=("periodic", "linear"))

    p = add("atoms", "dyadic cube sandwich check and certified rectangular atoms")
    p.add_argument("--matrix", default="2")
    p.add_argument("--matrix2")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--N", type=int, default=128)
    p.add_argument("--L", type=float, default=8.0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--s", default="1,1")
    p.add_argument("--samples", type=int, default=1000)

    p = add("experiment", "run a configured experiment")
    p.add_argument("--name", choices=EXPERIMENTS, help="experiment id (overrides the config's)")
    return parser


def _apply_config_defaults(parser, args, argv) -> argparse.Namespace:
    """For non-experiment commands, keys of a config's ``[global]`` and
    ``[<command>]`` sections become option defaults; explicit flags win."""
    if args.command == "experiment" or not args.config:
        return args
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[global]\n" + Path(args.config).read_text(encoding="utf-8"))
    values = dict(cp["global"])
    if cp.has_section(args.command):
        values.update(cp[args.command])
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in values.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        conv = known[dest].type or str
        defaults[dest] = conv(val)
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _apply_config_defaults(parser, args, argv)
        args.seed_given, args.threads_given = args.seed, args.threads
        args.seed = 0 if args.seed is None else args.seed
        args.threads = 1 if args.threads is None else args.threads
        return COMMANDS[args.command](args)
    except AnisoprodError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
