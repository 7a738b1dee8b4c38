"""Experiment configuration: flat ``key = value`` files with optional sections.

Keys before the first ``[section]`` header are global.  A section named
after the experiment overrides the global keys; other sections are kept for
reference only.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

EXPERIMENTS = ("norm_equivalence", "t11", "t12_decay")


def _ints(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _strs(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(";") if v.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class ExperimentConfig:
    """Resolved parameters of one experiment run.

    Multi-valued keys use ``,`` for numbers and ``;`` for specs, e.g.
    ``weights = one; power:alpha1=0.3,alpha2=0.3``.
    """

    experiment: str = "t11"
    dilation1: str = "2"
    dilation2: str = "2"
    weights: tuple = ("one",)
    kernel: str = "tensorcz:profile=sign"
    N: tuple = (256, 512)
    L: float = 32.0
    window: tuple = (1, 3)
    min_cells: int = 8
    family: str = "gabor"
    count: int = 20
    p: float = 2.0
    q: float = 2.0
    s: tuple = (1, 1)
    q_w: Optional[float] = None
    r: Optional[float] = None
    gamma_max: int = 5
    cube_level: int = 3
    cube_index: int = 1
    mode: str = "midpoint"
    boundary: str = "periodic"
    check_kernel: bool = True
    zero_atom: bool = False
    spread_tol: float = 10.0
    drift_tol: float = 0.2
    out: str = "results"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.weights = _strs(self.weights)
        self.N = _ints(self.N)
        self.window = _ints(self.window)
        self.s = _ints(self.s)
        for name in ("L", "p", "q", "spread_tol", "drift_tol"):
            setattr(self, name, float(getattr(self, name)))
        for name in ("min_cells", "count", "gamma_max", "cube_level", "cube_index", "seed", "threads"):
            setattr(self, name, int(getattr(self, name)))
        for name in ("q_w", "r"):
            v = getattr(self, name)
            setattr(self, name, None if v in (None, "", "none") else float(v))
        self.check_kernel = _bool(self.check_kernel)
        self.zero_atom = _bool(self.zero_atom)
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if len(self.window) != 2 or self.window[0] > self.window[1]:
            raise ValueError("window needs two increasing integers")
        if not self.N:
            raise ValueError("N needs at least one grid size")

    def replace(self, **changes) -> "ExperimentConfig":
        data = asdict(self)
        data.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig(**data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


KNOWN_KEYS = {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
    """Parse config text on top of the experiment's defaults; unknown keys
    raise ``ValueError``."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[global]\n" + text)
    values = dict(parser["global"])
    exp = experiment or values.get("experiment", "t11")
    if parser.has_section(exp):
        values.update(parser[exp])
    values.pop("experiment", None)
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return default_config(exp, **values)


def load_config(path, experiment: Optional[str] = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), experiment)


DEFAULTS = {
    "norm_equivalence": dict(weights=("one", "power:alpha1=0.3,alpha2=0.3"), N=(256, 512), L=32.0,
                             window=(1, 3), p=2.0, count=20, drift_tol=0.1),
    "t11": dict(weights=("one", "power:alpha1=0.5,alpha2=0.0"), N=(256, 512), L=32.0, p=2.0, count=20,
                drift_tol=0.2),
    "t12_decay": dict(N=(1 << 20,), L=4096.0, window=(-4, 4), p=1.0, q=2.0, s=(1, 1), weights=("one",),
                      gamma_max=5, mode="cell", boundary="linear"),
}


def default_config(experiment: str, **changes) -> ExperimentConfig:
    """Desk-scale defaults of each experiment."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}")
    base = dict(DEFAULTS[experiment], experiment=experiment)
    base.update({k: v for k, v in changes.items() if v is not None})
    return ExperimentConfig(**base)
