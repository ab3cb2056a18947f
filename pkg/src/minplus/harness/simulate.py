"""Forward simulation of the configured system and CSV I/O for trajectories.

Random numbers come from numpy's ``default_rng`` (PCG64 bit generator), whose
stream for a given seed is fixed across platforms.  Disturbances are drawn
before measurement noise at every step.
"""
import csv
from typing import NamedTuple, Optional

import numpy as np


class Trajectory(NamedTuple):
    states: Optional[np.ndarray]  # (T+1, n), row 0 is x0; None when unknown
    measurements: np.ndarray  # (T, p), row k-1 is y_k


def _draw(rng, kind, std, size):
    if kind == "gaussian":
        return rng.normal(0.0, std, size)
    # uniform with the same standard deviation
    a = np.sqrt(3.0) * std
    return rng.uniform(-a, a, size)


def simulate(F, f, B, output, x0, T, seed, noise="gaussian", w_std=0.05, v_std=0.5, jump_step=0, jump=None):
    """``x_{k+1} = F x_k + f + B w_k`` and ``y_k = C(x_k) + v_k`` for k = 1..T.

    When ``jump_step`` is positive, ``jump`` is added to the state right after
    the transition into that step.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    B = np.asarray(B, dtype=float).reshape(F.shape[0], -1)
    f = np.asarray(f, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    rng = np.random.default_rng(seed)
    xs, ys = [x.copy()], []
    for k in range(1, T + 1):
        w = _draw(rng, noise, w_std, B.shape[1])
        x = F @ x + f + B @ w
        if jump_step and k == jump_step:
            x = x + np.asarray(jump, dtype=float)
        y = np.asarray(output(x[None, :]), dtype=float).reshape(-1)
        y = y + _draw(rng, noise, v_std, y.shape[0])
        xs.append(x.copy())
        ys.append(y)
    p = ys[0].shape[0] if ys else np.asarray(output(x[None, :])).reshape(-1).shape[0]
    return Trajectory(np.array(xs), np.array(ys).reshape(T, p))


def simulate_config(cfg, seed=None):
    """Simulation described by a :class:`RunConfig`."""
    s = cfg.simulation
    F, f, B, output = cfg.forward()
    return simulate(
        F,
        f,
        B,
        output,
        s.x0,
        s.T,
        s.seed if seed is None else seed,
        s.noise,
        s.w_std,
        s.v_std,
        s.jump_step,
        s.jump,
    )


def _fmt(v):
    return repr(float(v))


def y_header(p):
    return ["y"] if p == 1 else [f"y{i + 1}" for i in range(p)]


def write_truth(path, states):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"x{i + 1}" for i in range(states.shape[1])])
        for k, x in enumerate(states):
            w.writerow([k] + [_fmt(v) for v in x])


def write_measurements(path, ys):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + y_header(ys.shape[1]))
        for k, y in enumerate(ys, start=1):
            w.writerow([k] + [_fmt(v) for v in y])


def _read(path, prefix):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "step" or len(rows[0]) < 2:
        raise ValueError(f"{path}: expected a header starting with 'step'")
    if not all(c.startswith(prefix) for c in rows[0][1:]):
        raise ValueError(f"{path}: expected columns named {prefix}*")
    steps = np.array([int(r[0]) for r in rows[1:]], dtype=int)
    data = np.array([[float(c) for c in r[1:]] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, len(rows[0]) - 1)
    return steps, data


def read_measurements(path):
    steps, ys = _read(path, "y")
    if not np.array_equal(steps, np.arange(1, steps.shape[0] + 1)):
        raise ValueError(f"{path}: steps must run 1..T without gaps")
    return ys


def read_truth(path):
    steps, xs = _read(path, "x")
    if not np.array_equal(steps, np.arange(steps.shape[0])):
        raise ValueError(f"{path}: steps must run 0..T without gaps")
    return xs
