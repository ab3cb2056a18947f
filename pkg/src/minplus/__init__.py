"""Deterministic min-plus filtering with cluster-based pruning."""
from .errors import (
    ConfigError,
    DimensionMismatch,
    FitFailed,
    MinPlusError,
    NonConvex,
    OutOfDomain,
    RankDeficient,
    SingularGain,
    StepFailed,
)
from .expander import ScalarField, expand, fit_partition, solve_constrained_lsq
from .filter_core import FilterConfig, FilterState, RunResult, init, run, update
from .propagator import ModelSpec, StepGains, init_value, measurement_expansion, propagate, step_gains
from .pruner import PruneConfig, argmin_catalog, cluster, prune
from .quadform import (
    QuadForm,
    QuadSet,
    add_constant,
    combine_minplus,
    eval_set,
    evaluate,
    unconstrained_minimizer,
    windowed_argmin,
)
from .window import Window

__version__ = "0.1.0"
