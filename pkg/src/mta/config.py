"""Run configuration: a flat ``key = value`` file with dotted section names.

Example::

    seed = 2015
    shocks.family = gumbel
    discretization.S = 10000
    invert.p = 0.5,0.5; 0.2,0.8

Lines starting with ``#`` or ``;`` are comments.  Vectors are comma separated
and matrices or lists of vectors use ``;`` between rows.  Unknown keys are
rejected so that typos fail loudly.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .shocks import GumbelIID, MultivariateNormal, StateDependentNormalMixture

__all__ = ["RunConfig", "load_config", "parse_config"]


@dataclass(frozen=True)
class ShockConfig:
    family: str = "gumbel"  # gumbel | normal | resource | bus_mixture
    dim: int = 2
    scale: float = 1.0
    mean: tuple | None = None
    cov: tuple | None = None
    a: float = 0.1
    b: float = 0.5

    def build(self):
        if self.family == "gumbel":
            return GumbelIID(scale=self.scale, dim=self.dim)
        if self.family == "normal":
            if self.cov is None:
                raise ValidationError("shocks.cov is required for the normal family")
            cov = np.array(self.cov, dtype=float)
            mean = np.zeros(cov.shape[0]) if self.mean is None else np.array(self.mean, dtype=float)
            return MultivariateNormal(mean=mean, cov=cov)
        if self.family == "resource":
            from .montecarlo import ResourceModelSpec, resource_shock_spec

            if self.cov is None:
                return resource_shock_spec()
            return resource_shock_spec(ResourceModelSpec(cov=tuple(map(tuple, self.cov))))
        if self.family == "bus_mixture":
            return StateDependentNormalMixture(a=self.a, b=self.b)
        raise ValidationError(f"unknown shocks.family {self.family!r}")


@dataclass(frozen=True)
class DiscretizationConfig:
    S: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class InvertConfig:
    p: tuple = ()


@dataclass(frozen=True)
class EstimationConfig:
    source: str = "resource"  # resource | panel | ccp | bus
    beta: float = 0.9
    y0: int = 0
    bounds: bool = False
    tol: float = 1e-10
    strict: bool = False
    n_states: int | None = None
    n_actions: int | None = None


@dataclass(frozen=True)
class MonteCarloConfig:
    N: int = 1000
    T: int = 1000
    replications: int = 20
    S_true: int = 5000
    S_est: int = 2000
    estimated_transitions: bool = True


@dataclass(frozen=True)
class SweepConfig:
    S: tuple = (100, 300, 1000)
    seeds: tuple = (0, 1, 2, 3, 4)
    grid_n: int = 7
    decimals: int | None = None


@dataclass(frozen=True)
class BusSection:
    beta: float = 0.9
    S: int = 2000
    theta: float | None = None
    theta_replace: float | None = None
    action_specific_theta: bool = False
    synthetic_keep_flow: float = 9.25
    synthetic_buses: int = 104
    synthetic_periods: int = 40


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 100
    resample_size: int | None = None
    test_mode: bool = False


@dataclass(frozen=True)
class IoConfig:
    p_csv: str | None = None
    panel: str | None = None
    ccp: str | None = None
    transitions: str | None = None
    bus_csv: str | None = None


SECTIONS = {
    "shocks": ShockConfig,
    "discretization": DiscretizationConfig,
    "invert": InvertConfig,
    "estimation": EstimationConfig,
    "montecarlo": MonteCarloConfig,
    "sweep": SweepConfig,
    "bus": BusSection,
    "bootstrap": BootstrapConfig,
    "io": IoConfig,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    shocks: ShockConfig = field(default_factory=ShockConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    invert: InvertConfig = field(default_factory=InvertConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    montecarlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    bus: BusSection = field(default_factory=BusSection)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    io: IoConfig = field(default_factory=IoConfig)
    digest: str = ""


def _vector(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _rows(text):
    return tuple(_vector(r) for r in text.split(";") if r.strip())


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("", "none") else conv(text)

    return parse


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _ints(text):
    return tuple(_int(v) for v in text.split(",") if v.strip())


PARSERS = {
    ("shocks", "family"): str.strip,
    ("shocks", "dim"): _int,
    ("shocks", "mean"): _vector,
    ("shocks", "cov"): _rows,
    ("invert", "p"): _rows,
    ("estimation", "source"): str.strip,
    ("estimation", "n_states"): _optional(_int),
    ("estimation", "n_actions"): _optional(_int),
    ("sweep", "S"): _ints,
    ("sweep", "seeds"): _ints,
    ("sweep", "decimals"): _optional(_int),
    ("bus", "theta"): _optional(float),
    ("bus", "theta_replace"): _optional(float),
    ("bootstrap", "resample_size"): _optional(_int),
}


def _default_parser(cls, name):
    default = {f.name: f.default for f in fields(cls)}[name]
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return _int
    if isinstance(default, float):
        return float
    return _optional(str.strip)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"config parse error: {exc}") from exc
    if cp.sections() != ["root"]:
        raise ValidationError("config must be flat key = value lines (no [sections])")
    values = {name: {} for name in SECTIONS}
    top = {}
    for key, raw in cp["root"].items():
        if "." not in key:
            if key != "seed":
                raise ValidationError(f"unknown config key {key!r}")
            top["seed"] = _int(raw)
            continue
        section, name = key.split(".", 1)
        cls = SECTIONS.get(section)
        if cls is None or name not in {f.name for f in fields(cls)}:
            raise ValidationError(f"unknown config key {key!r}")
        conv = PARSERS.get((section, name)) or _default_parser(cls, name)
        try:
            values[section][name] = conv(raw)
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {exc}") from exc
    kwargs = {name: cls(**values[name]) for name, cls in SECTIONS.items()}
    digest = hashlib.sha256(text.encode()).hexdigest()
    return RunConfig(**top, **kwargs, digest=digest)


def load_config(path) -> RunConfig:
    """Read a config file; relative ``io.*`` paths resolve against its directory."""
    path = Path(path)
    cfg = parse_config(path.read_text())
    io = cfg.io
    resolved = {}
    for f in fields(io):
        v = getattr(io, f.name)
        if v is not None and not Path(v).is_absolute():
            v = str(path.parent / v)
        if v is not None and not Path(v).exists():
            raise ValidationError(f"io.{f.name}: file not found: {v}")
        resolved[f.name] = v
    return replace(cfg, io=IoConfig(**resolved))
