"""Sliding-window min-plus filter: expand, propagate, estimate, prune, recenter."""
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import MinPlusError, StepFailed
from .expander import CONSTRAINED, CONVEX_FLOOR, FIT_METHODS
from .propagator import init_value, propagate
from .pruner import PruneConfig, argmin_catalog, survivors
from .quadform import QuadSet
from .window import Window


@dataclass(frozen=True)
class FilterConfig:
    half_width: float = 1.0
    partitions: int = 8
    samples_per_partition: int = 9
    prune: PruneConfig = field(default_factory=PruneConfig)
    measurement_mode: str = "combined"
    fit_floor: float = CONVEX_FLOOR
    fit_method: str = CONSTRAINED

    def __post_init__(self):
        if np.any(np.asarray(self.half_width, dtype=float) <= 0):
            raise ValueError("half_width must be positive")
        if self.measurement_mode not in ("combined", "split"):
            raise ValueError("measurement_mode must be 'combined' or 'split'")
        if self.fit_method not in FIT_METHODS:
            raise ValueError(f"fit_method must be one of {FIT_METHODS}")
        if not self.fit_floor > 0:
            raise ValueError("fit_floor must be positive")

    def window(self, center):
        return Window(center, self.half_width, self.partitions, self.samples_per_partition)


@dataclass(frozen=True)
class FilterState:
    step: int
    value: QuadSet
    estimate: np.ndarray
    window: Window
    unpruned_size: Optional[int] = None


def init(model, cfg):
    x0 = model.x0_bar.copy()
    return FilterState(0, init_value(model), x0, cfg.window(x0), None)


def extract_estimate(value, window, catalog=None):
    """Minimizer of the set over the window box: the best of the members'
    windowed argmins (lowest index on ties)."""
    if catalog is None:
        catalog = argmin_catalog(value, window)
    i = catalog.best()
    return catalog.points[i].copy(), float(catalog.values[i]), catalog


def update(st, y, model, cfg):
    """One filter step on measurement ``y``; returns the next state."""
    grown = propagate(st.value, y, model, st.window, cfg.measurement_mode, cfg.fit_floor, cfg.fit_method)
    estimate, _, catalog = extract_estimate(grown, st.window)
    kept = grown.subset(survivors(catalog, cfg.prune))
    return FilterState(st.step + 1, kept, estimate, st.window.recentered(estimate), len(grown))


@dataclass
class RunResult:
    estimates: np.ndarray  # (T+1, n), row 0 is the prior mean
    card_pre: List[int]
    card_post: List[int]
    step_seconds: List[float]
    final: FilterState

    @property
    def steps(self):
        return len(self.card_pre)


def run(model, cfg, ys, state=None):
    """Fold :func:`update` over the measurement sequence ``ys``.

    Any step error is re-raised as :class:`StepFailed` carrying the 1-based
    step index.
    """
    st = init(model, cfg) if state is None else state
    ys = [np.atleast_1d(np.asarray(y, dtype=float)) for y in ys]
    est = [st.estimate.copy()]
    pre, post, secs = [], [], []
    for y in ys:
        t0 = time.perf_counter()
        try:
            st = update(st, y, model, cfg)
        except (MinPlusError, np.linalg.LinAlgError, ValueError) as exc:
            raise StepFailed(st.step + 1, exc) from exc
        secs.append(time.perf_counter() - t0)
        est.append(st.estimate.copy())
        pre.append(st.unpruned_size)
        post.append(len(st.value))
    return RunResult(np.array(est), pre, post, secs, st)


def with_prune(cfg, **changes):
    return replace(cfg, prune=replace(cfg.prune, **changes))
