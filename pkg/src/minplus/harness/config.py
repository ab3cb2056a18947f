"""Run configuration: a TOML file with fixed sections and key names.

Every section is optional and every key has a default; unknown sections or
keys are rejected.  See the README for the full schema.
"""
import sys
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Union

import numpy as np

from ..errors import ConfigError
from ..expander import CONSTRAINED, CONVEX_FLOOR, FIT_METHODS
from ..filter_core import FilterConfig
from ..pruner import CLUSTER, VALUE, PruneConfig
from . import models

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

ORACLES = ("none", "grid", "riccati")
NOISES = ("gaussian", "uniform")
MODELS = ("cubic_demo", "affine")
OUTPUTS = ("linear", "cubic")

Matrix = Union[float, List[float], List[List[float]]]


@dataclass
class ModelSection:
    name: str = "cubic_demo"
    N0: Optional[Matrix] = None  # default identity
    Q_eta: Matrix = 1.0
    R: Matrix = 1.0
    x0_bar: List[float] = field(default_factory=lambda: [0.0, 0.0])
    phi0: float = 0.0
    B_tilde: Optional[Matrix] = None  # backward disturbance input, default B
    # "affine" models only
    F_fwd: Optional[Matrix] = None
    f_fwd: Optional[List[float]] = None
    B: Optional[Matrix] = None
    output: str = "linear"
    H: Optional[Matrix] = None
    h: Optional[List[float]] = None
    cubic_index: int = 2  # 1-based state coordinate for the cubic output
    cubic_scale: float = models.CUBIC_SCALE


@dataclass
class SimulationSection:
    T: int = 100
    seed: int = 42
    x0: List[float] = field(default_factory=lambda: [0.0, 2.0])
    noise: str = "gaussian"
    w_std: float = 0.05
    v_std: float = 0.5
    jump_step: int = 0  # 0 disables the jump
    jump: List[float] = field(default_factory=lambda: [0.0, 6.0])


@dataclass
class FilterSection:
    half_width: Union[float, List[float]] = 1.0
    partitions: int = 8
    samples_per_partition: int = 9
    measurement_mode: str = "combined"
    fit_method: str = CONSTRAINED
    fit_floor: float = CONVEX_FLOOR
    record_timing: bool = False


@dataclass
class PruneSection:
    max_members: int = 12
    strategy: str = CLUSTER
    seed: int = 0
    max_iterations: int = 100


@dataclass
class IOSection:
    measurements: str = "generate"  # or a CSV path
    truth: str = ""  # optional truth CSV when measurements come from a file
    out_dir: str = "out"


@dataclass
class OracleSection:
    kind: str = "none"
    points: int = 81
    w_points: int = 41
    w_sigmas: float = 6.0
    margin: float = 2.0


@dataclass
class CompareSection:
    seeds: List[int] = field(default_factory=list)  # empty: [simulation.seed]
    threshold: float = 0.0  # 0: smallest window half-width
    error_index: int = 2  # 1-based state coordinate used for the error
    horizon: int = 15


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    filter: FilterSection = field(default_factory=FilterSection)
    prune: PruneSection = field(default_factory=PruneSection)
    io: IOSection = field(default_factory=IOSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    compare: CompareSection = field(default_factory=CompareSection)

    # -- derived objects ---------------------------------------------------

    def filter_config(self):
        f, p = self.filter, self.prune
        return FilterConfig(
            half_width=f.half_width,
            partitions=f.partitions,
            samples_per_partition=f.samples_per_partition,
            prune=PruneConfig(p.max_members, p.strategy, p.seed, p.max_iterations),
            measurement_mode=f.measurement_mode,
            fit_floor=f.fit_floor,
            fit_method=f.fit_method,
        )

    def forward(self):
        """Forward model ``(F_fwd, f_fwd, B, output)`` used by the simulator."""
        m = self.model
        if m.name == "cubic_demo":
            F, B = models.forward_cubic_demo()
            return F, np.zeros(2), B, models.cubic_output
        F = _mat(m.F_fwd)
        n = F.shape[0]
        f = np.zeros(n) if m.f_fwd is None else np.asarray(m.f_fwd, dtype=float)
        B = _mat(m.B).reshape(n, -1)
        return F, f, B, self._output_fn(n)

    def _output_fn(self, n):
        m = self.model
        if m.output == "cubic":
            i, scale = m.cubic_index - 1, float(m.cubic_scale)
            return lambda X: (np.atleast_2d(X)[:, i : i + 1] ** 3) / scale
        H = _mat(m.H).reshape(-1, n)
        h = np.zeros(H.shape[0]) if m.h is None else np.asarray(m.h, dtype=float)
        return lambda X: np.atleast_2d(X) @ H.T + h

    def model_spec(self):
        from ..propagator import ModelSpec

        m = self.model
        N0 = None if m.N0 is None else _mat(m.N0)
        if m.name == "cubic_demo":
            return models.cubic_demo(N0, _mat(m.Q_eta), _mat(m.R), m.x0_bar, m.phi0, m.B_tilde)
        F, f, B, _ = self.forward()
        n = F.shape[0]
        F_bwd, f_bwd = models.backward_affine(F, f)
        kw = {}
        if m.output == "cubic":
            kw = dict(output_map=self._output_fn(n), output_dims=(m.cubic_index - 1,))
        else:
            H = _mat(m.H).reshape(-1, n)
            kw = dict(H=H, h=None if m.h is None else np.asarray(m.h, dtype=float))
        return ModelSpec(
            B=B if m.B_tilde is None else _mat(m.B_tilde).reshape(n, -1),
            Q_eta=_mat(m.Q_eta),
            R=_mat(m.R),
            N0=np.eye(n) if N0 is None else N0,
            x0_bar=np.asarray(m.x0_bar, dtype=float),
            phi0=m.phi0,
            F=F_bwd,
            f=f_bwd,
            name="affine",
            **kw,
        )

    def with_overrides(self, seed=None, oracle=None, out_dir=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, simulation=replace(cfg.simulation, seed=int(seed)))
        if oracle is not None:
            cfg = replace(cfg, oracle=replace(cfg.oracle, kind=oracle))
        if out_dir is not None:
            cfg = replace(cfg, io=replace(cfg.io, out_dir=str(out_dir)))
        cfg.validate()
        return cfg

    def validate(self):
        m, s, f, o = self.model, self.simulation, self.filter, self.oracle
        _choice("model.name", m.name, MODELS)
        _choice("model.output", m.output, OUTPUTS)
        _choice("simulation.noise", s.noise, NOISES)
        _choice("filter.fit_method", f.fit_method, FIT_METHODS)
        _choice("filter.measurement_mode", f.measurement_mode, ("combined", "split"))
        _choice("prune.strategy", self.prune.strategy, (CLUSTER, VALUE))
        _choice("oracle.kind", o.kind, ORACLES)
        if s.T < 0:
            raise ConfigError("simulation.T must be >= 0")
        if s.w_std < 0 or s.v_std < 0:
            raise ConfigError("noise scales must be >= 0")
        if m.name == "affine":
            if m.F_fwd is None or m.B is None:
                raise ConfigError("affine model needs model.F_fwd and model.B")
            if m.output == "linear" and m.H is None:
                raise ConfigError("linear output needs model.H")
        if self.compare.horizon < 1:
            raise ConfigError("compare.horizon must be >= 1")
        try:
            self.filter_config()
            spec = self.model_spec()
        except ConfigError:
            raise
        except (ValueError, TypeError, np.linalg.LinAlgError) as exc:
            raise ConfigError(str(exc)) from exc
        n = spec.n
        if len(s.x0) != n or (s.jump_step and len(s.jump) != n):
            raise ConfigError(f"simulation.x0 and simulation.jump need {n} entries")
        if not 1 <= self.compare.error_index <= n:
            raise ConfigError(f"compare.error_index must be in 1..{n}")
        if m.output == "cubic" and not 1 <= m.cubic_index <= n:
            raise ConfigError(f"model.cubic_index must be in 1..{n}")
        return self


def _mat(v):
    return np.atleast_2d(np.asarray(v, dtype=float)) if v is not None else None


def _choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


def _section(cls, name, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    obj = cls(**raw)
    for k, f in known.items():
        v = getattr(obj, k)
        if f.type in (int, float) and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{name}.{k} must be a number")
        if f.type is int and isinstance(v, float):
            if not v.is_integer():
                raise ConfigError(f"{name}.{k} must be an integer")
            setattr(obj, k, int(v))
        if f.type is float:
            setattr(obj, k, float(v))
        if f.type is str and not isinstance(v, str):
            raise ConfigError(f"{name}.{k} must be a string")
        if f.type is bool and not isinstance(v, bool):
            raise ConfigError(f"{name}.{k} must be true or false")
    return obj


_SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}


def from_dict(raw):
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {name: _section(type(factory()), name, raw.get(name, {})) for name, factory in _SECTIONS.items()}
    return RunConfig(**parts).validate()


def loads(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(raw)


def load(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return from_dict(raw)
