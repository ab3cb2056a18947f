"""Reference solvers used to check the min-plus filter.

Everything here is deliberately brute force and shares no code path with the
min-plus recursion: value functions live on tensor grids, the disturbance is
minimized by enumeration, and the linear case is solved in information form
with covariance addition instead of completed squares.  Intended for n <= 2.
"""
import csv
import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import OutOfDomain

log = logging.getLogger(__name__)

MIN_STATE_POINTS = 33


@dataclass(frozen=True)
class GridSpec:
    lower: np.ndarray
    upper: np.ndarray
    points: int = 81
    w_lower: np.ndarray = None
    w_upper: np.ndarray = None
    w_points: int = 121

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("grid bounds must satisfy lower < upper")
        if self.points < MIN_STATE_POINTS:
            raise ValueError(f"state grid needs >= {MIN_STATE_POINTS} points per dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.w_lower is not None:
            object.__setattr__(self, "w_lower", np.atleast_1d(np.asarray(self.w_lower, dtype=float)))
            object.__setattr__(self, "w_upper", np.atleast_1d(np.asarray(self.w_upper, dtype=float)))

    @classmethod
    def for_model(cls, model, lower, upper, points=81, w_sigmas=6.0, w_points=121):
        """Disturbance grid spanning +/- ``w_sigmas`` standard deviations of
        the Gaussian with precision ``Q_eta``."""
        sd = np.sqrt(np.diag(np.linalg.inv(model.Q_eta)))
        return cls(lower, upper, points, -w_sigmas * sd, w_sigmas * sd, w_points)

    @property
    def axes(self):
        return [np.linspace(a, b, self.points) for a, b in zip(self.lower, self.upper)]

    @property
    def shape(self):
        return (self.points,) * self.lower.shape[0]

    def nodes(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def w_axes(self):
        return [np.linspace(a, b, self.w_points) for a, b in zip(self.w_lower, self.w_upper)]

    def w_nodes(self):
        mesh = np.meshgrid(*self.w_axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def w_spacing(self):
        return (self.w_upper - self.w_lower) / (self.w_points - 1)


class GridValue:
    """Value function sampled on a grid; multilinear interpolation, queries
    outside the box are clamped to it and counted."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=float).reshape(grid.shape)
        self._interp = RegularGridInterpolator(grid.axes, self.values, method="linear")
        self.clamped = 0

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xc = np.clip(X, self.grid.lower, self.grid.upper)
        self.clamped += int(np.count_nonzero(np.any(Xc != X, axis=1)))
        return self._interp(Xc)

    def argmin(self):
        i = int(np.argmin(self.values))
        return self.grid.nodes()[i], float(self.values.ravel()[i])


class DPReport(NamedTuple):
    bound: float  # worst-case excess of the w-grid minimum over the true one
    clamped: int  # interpolation queries clamped to the grid box
    out_of_domain: int = 0  # nodes whose every candidate left the box


def dp_values(prev, y, model, X, grid, meas=None, chunk=2048, strict=False):
    """``min_w prev(A(x) + B w) + 0.5 w^T Q_eta w + meas(x)`` at points ``X``.

    ``prev`` is any vectorized callable (a :class:`GridValue` or an exact
    function); ``meas`` defaults to the true ``0.5 ||y - C(x)||^2_R``.
    Returns ``(values, argmin_w, report)``.  Nodes with no candidate inside
    ``prev``'s grid are clamped and counted, or raise :class:`OutOfDomain`
    when ``strict``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Wn = grid.w_nodes()
    # keep the (chunk, W, n) candidate block to a few million entries
    chunk = max(1, min(chunk, 4_000_000 // Wn.shape[0]))
    h = grid.w_spacing()
    m = Wn.shape[1]
    cost_w = 0.5 * np.einsum("wi,ij,wj->w", Wn, model.Q_eta, Wn)
    shift = Wn @ model.B.T  # (W, n)
    out = np.empty(X.shape[0])
    w_opt = np.empty((X.shape[0], m))
    bound = 0.0
    outside = 0
    box = getattr(prev, "grid", None)
    clamped_before = getattr(prev, "clamped", 0)
    for s in range(0, X.shape[0], chunk):
        Xs = X[s : s + chunk]
        A = model.backward(Xs)
        cand = A[:, None, :] + shift[None, :, :]
        if box is not None:
            inside = np.all((cand >= box.lower) & (cand <= box.upper), axis=2)
            outside += int(np.count_nonzero(~inside.any(axis=1)))
        vals = np.asarray(prev(cand.reshape(-1, cand.shape[2])), dtype=float).reshape(cand.shape[:2])
        vals = vals + cost_w[None, :]
        k = np.argmin(vals, axis=1)
        out[s : s + chunk] = vals[np.arange(Xs.shape[0]), k]
        w_opt[s : s + chunk] = Wn[k]
        bound = max(bound, _grid_bound(vals, k, grid.w_points, m, h))
    if meas is None:
        out += model.measurement_cost(X, y)
    else:
        out += np.asarray(meas(X), dtype=float).reshape(-1)
    clamped = getattr(prev, "clamped", 0) - clamped_before
    if clamped:
        log.debug("dp_values: %d queries clamped to the grid box", clamped)
    if outside and strict:
        raise OutOfDomain(f"{outside} nodes have no disturbance candidate inside the grid")
    return out, w_opt, DPReport(bound, clamped, outside)


def _grid_bound(vals, k, npts, m, h):
    """Excess of the grid minimum over the continuous one, from the local
    second difference along each disturbance axis: ``m/8 * max curv * h^2``."""
    shape = (vals.shape[0],) + (npts,) * m
    V = vals.reshape(shape)
    idx = np.array(np.unravel_index(k, (npts,) * m)).T
    worst = 0.0
    rows = np.arange(vals.shape[0])
    for ax in range(m):
        inner = (idx[:, ax] > 0) & (idx[:, ax] < npts - 1)
        if not inner.any():
            continue
        lo, hi = idx.copy(), idx.copy()
        lo[:, ax] -= 1
        hi[:, ax] += 1
        fl = V[(rows,) + tuple(lo.T)]
        fc = V[(rows,) + tuple(idx.T)]
        fh = V[(rows,) + tuple(hi.T)]
        curv = (fl - 2 * fc + fh)[inner] / h[ax] ** 2
        worst = max(worst, float(curv.max()) * h[ax] ** 2)
    return m * worst / 8.0


def dp_step(prev, y, model, grid, meas=None, strict=False):
    """One dynamic-programming step evaluated on every node of ``grid``."""
    vals, _, report = dp_values(prev, y, model, grid.nodes(), grid, meas, strict=strict)
    return GridValue(grid, vals), report


def dp_filter(model, ys, grid):
    """Grid dynamic-programming filter; estimate is the best grid node.

    Returns ``(estimates (T+1, n), values)`` with ``values`` the final
    :class:`GridValue`.
    """
    nodes = grid.nodes()
    r = nodes - model.x0_bar
    V = GridValue(grid, 0.5 * (np.einsum("pi,ij,pj->p", r, model.N0, r) + model.phi0))
    est = [model.x0_bar.copy()]
    for y in ys:
        V, _ = dp_step(V, y, model, grid)
        est.append(V.argmin()[0].copy())
    return np.array(est), V


def riccati_filter(model, ys):
    """Information-form filter for affine backward dynamics and linear output.

    Holding ``V_k = 0.5 (x - m)^T P (x - m)`` the disturbance minimization is
    an infimal convolution, so the precision becomes
    ``(P^{-1} + B Q_eta^{-1} B^T)^{-1}``; the measurement then adds ``H^T R H``.
    """
    if not (model.is_affine and model.has_linear_output):
        raise ValueError("riccati_filter needs affine dynamics and a linear output")
    F, f, B, H, R = model.F, model.f, model.B, model.H, model.R
    Qinv = np.linalg.inv(model.Q_eta)
    P = model.N0.copy()
    mean = model.x0_bar.copy()
    est = [mean.copy()]
    for y in ys:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        Pi = np.linalg.inv(np.linalg.inv(P) + B @ Qinv @ B.T)
        P_new = F.T @ Pi @ F + H.T @ R @ H
        rhs = F.T @ Pi @ (mean - f) + H.T @ R @ (y - model.h)
        try:
            mean = np.linalg.solve(P_new, rhs)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular information matrix") from exc
        P = 0.5 * (P_new + P_new.T)
        est.append(mean.copy())
    return np.array(est)


def dump_grid_csv(gv: Union[GridValue, Callable], path, grid=None):
    """Write ``x1,...,xn,value`` rows for plot inspection."""
    grid = gv.grid if grid is None else grid
    nodes = grid.nodes()
    vals = gv.values.ravel() if isinstance(gv, GridValue) else gv(nodes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(nodes.shape[1])] + ["value"])
        for row, v in zip(nodes, vals):
            w.writerow([repr(float(c)) for c in row] + [repr(float(v))])
