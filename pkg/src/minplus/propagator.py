"""One-step min-plus recursion of the estimation value function.

Model (backward form used by the filter)::

    x_k = A(x_{k+1}) + B w,        y_k = C(x_k) + v_k

with running cost ``0.5 w^T Q_eta w + 0.5 ||y - C(x)||^2_R`` and prior
``V_0(x) = 0.5 (||x - x0_bar||^2_N0 + phi0)``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from . import expander
from .errors import DimensionMismatch, SingularGain
from .quadform import QuadForm, QuadSet, add_constant, combine_minplus

PIVOT_TOL = 1e-12


def _spd(name, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError(f"{name} must be symmetric")
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class ModelSpec:
    """System maps and cost weights.

    Backward dynamics are either affine (``F``, ``f``: ``A(x) = F x + f``) or
    a vectorized callable ``backward_map`` from (P, n) to (P, n) reading the
    coordinates ``dynamics_dims``.  The output is either linear (``H``, with
    optional ``h``: ``C(x) = H x + h``) or a vectorized callable
    ``output_map`` from (P, n) to (P, p) reading ``output_dims``.
    """

    B: np.ndarray
    Q_eta: np.ndarray
    R: np.ndarray
    N0: np.ndarray
    x0_bar: np.ndarray
    phi0: float = 0.0
    F: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    backward_map: Optional[Callable] = None
    dynamics_dims: Optional[Tuple[int, ...]] = None
    H: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    output_map: Optional[Callable] = None
    output_dims: Optional[Tuple[int, ...]] = None
    name: str = field(default="model", compare=False)

    def __post_init__(self):
        x0 = np.asarray(self.x0_bar, dtype=float).reshape(-1)
        n = x0.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        Q = _spd("Q_eta", self.Q_eta)
        R = _spd("R", self.R)
        N0 = _spd("N0", self.N0)
        if Q.shape[0] != B.shape[1] or N0.shape[0] != n:
            raise DimensionMismatch("B, Q_eta and N0 sizes disagree with x0_bar")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("x0_bar", x0)
        set_("B", B)
        set_("Q_eta", Q)
        set_("R", R)
        set_("N0", N0)
        set_("phi0", float(self.phi0))

        if (self.F is None) == (self.backward_map is None):
            raise ValueError("give exactly one of F (affine) or backward_map")
        if self.F is not None:
            F = np.asarray(self.F, dtype=float).reshape(n, n)
            f = np.zeros(n) if self.f is None else np.asarray(self.f, dtype=float).reshape(n)
            set_("F", F)
            set_("f", f)
        else:
            set_("dynamics_dims", expander._dims(self.dynamics_dims, n))

        if (self.H is None) == (self.output_map is None):
            raise ValueError("give exactly one of H (linear output) or output_map")
        if self.H is not None:
            H = np.atleast_2d(np.asarray(self.H, dtype=float))
            if H.shape != (R.shape[0], n):
                raise DimensionMismatch(f"H must be {(R.shape[0], n)}, got {H.shape}")
            h = np.zeros(H.shape[0]) if self.h is None else np.asarray(self.h, dtype=float).reshape(-1)
            set_("H", H)
            set_("h", h)
            set_("output_dims", tuple(int(i) for i in np.flatnonzero(np.any(H != 0, axis=0))))
        else:
            set_("output_dims", expander._dims(self.output_dims, n))

    @property
    def n(self):
        return self.x0_bar.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.R.shape[0]

    @property
    def is_affine(self):
        return self.F is not None

    @property
    def has_linear_output(self):
        return self.H is not None

    def backward(self, X):
        """``A(x)`` for points of shape (P, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.is_affine:
            return X @ self.F.T + self.f
        return np.asarray(self.backward_map(X), dtype=float).reshape(X.shape)

    def output(self, X):
        """``C(x)`` for points of shape (P, n); returns (P, p)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.has_linear_output:
            return X @ self.H.T + self.h
        return np.asarray(self.output_map(X), dtype=float).reshape(X.shape[0], self.p)

    def measurement_cost(self, X, y):
        r = np.atleast_1d(np.asarray(y, dtype=float))[None, :] - self.output(X)
        return 0.5 * np.einsum("pi,ij,pj->p", r, self.R, r)


@dataclass(frozen=True)
class StepGains:
    """Completed-square data for one source member ``N, L, phi``.

    The optimal disturbance at backward state ``a`` is ``w = K a + w_c`` and
    the minimized cost is ``0.5 a^T W a + ell . a + 0.5 c``.
    """

    K: np.ndarray
    w_c: np.ndarray
    W: np.ndarray
    ell: np.ndarray
    c: float


def init_value(model):
    """Singleton set holding the prior ``0.5 (||x - x0_bar||^2_N0 + phi0)``."""
    return QuadSet([QuadForm.centered(model.N0, model.x0_bar, model.phi0)])


def _factor(S):
    try:
        Lc = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularGain("Q_eta + B^T N B is not positive definite") from exc
    if np.min(np.diag(Lc)) ** 2 < PIVOT_TOL:
        raise SingularGain("Q_eta + B^T N B has a pivot below tolerance")
    return Lc


def _chol_solve(Lc, rhs):
    return np.linalg.solve(Lc.T, np.linalg.solve(Lc, rhs))


def step_gains(member, model):
    N, L, phi = member.q11, member.q12, member.q22
    B, Q = model.B, model.Q_eta
    S = Q + B.T @ N @ B
    Lc = _factor(0.5 * (S + S.T))
    K = -_chol_solve(Lc, B.T @ N)
    w_c = -_chol_solve(Lc, B.T @ L)
    G = np.eye(model.n) + B @ K
    W = G.T @ N @ G + K.T @ Q @ K
    ell = L @ G + w_c @ B.T @ N @ G + w_c @ Q @ K
    c = 2.0 * L @ B @ w_c + w_c @ S @ w_c + phi
    return StepGains(K, w_c, 0.5 * (W + W.T), ell, float(c))


def _substitute_affine(gains, F, f):
    """``0.5 a^T W a + ell . a + 0.5 c`` with ``a = F x + f`` as one form."""
    W, ell = gains.W, gains.ell
    q11 = F.T @ W @ F
    q12 = F.T @ (W @ f + ell)
    q22 = f @ W @ f + 2.0 * ell @ f + gains.c
    return QuadForm.from_blocks(0.5 * (q11 + q11.T), q12, q22)


def propagate_prior(v, model, window, floor=expander.CONVEX_FLOOR, method=expander.CONSTRAINED):
    """Disturbance-minimized prior ``min_w V_k(A(x) + B w) + 0.5 w^T Q_eta w``
    as a set, members ordered by (source index, dynamics expansion index)."""
    mats = []
    for q in v:
        gains = step_gains(q, model)
        if model.is_affine:
            mats.append(_substitute_affine(gains, model.F, model.f).matrix[None])
            continue
        dims = model.dynamics_dims
        dq = expander.expand(expander.dyn_quadratic(model.backward, gains.W, dims), window, floor, method)
        dl = expander.expand(expander.dyn_linear(model.backward, gains.ell, dims), window, floor, method)
        mats.append(add_constant(combine_minplus(dq, dl), 0.5 * gains.c).matrices)
    return QuadSet.from_matrices(np.concatenate(mats), symmetric=True)


def measurement_expansion(y, model, window, mode="combined", floor=expander.CONVEX_FLOOR, method=expander.CONSTRAINED):
    """Min-plus set for ``0.5 ||y - C(x)||^2_R``.

    Linear outputs give the exact singleton.  Otherwise ``mode='combined'``
    fits the whole residual; ``mode='split'`` fits the cross term
    ``-y^T R C(x)`` and ``0.5 ||C(x)||^2_R`` separately, combines them and
    adds ``0.5 y^T R y``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape[0] != model.p:
        raise DimensionMismatch(f"measurement has length {y.shape[0]}, expected {model.p}")
    if model.has_linear_output:
        H, R = model.H, model.R
        r = y - model.h
        return QuadSet([QuadForm.from_blocks(H.T @ R @ H, -H.T @ R @ r, r @ R @ r)])
    dims = model.output_dims
    if mode == "combined":
        return expander.expand(expander.output_residual(model.output, model.R, y, dims), window, floor, method)
    if mode == "split":
        cross = expander.expand(expander.output_cross(model.output, model.R, y, dims), window, floor, method)
        sq = expander.expand(expander.output_squared(model.output, model.R, dims), window, floor, method)
        return add_constant(combine_minplus(cross, sq), 0.5 * y @ model.R @ y)
    raise ValueError(f"unknown measurement mode {mode!r}")


def propagate(v, y, model, window, mode="combined", floor=expander.CONVEX_FLOOR, method=expander.CONSTRAINED):
    """Unpruned value set at the next step.

    Members are ordered lexicographically by (source member, dynamics
    expansion index, measurement expansion index).
    """
    if v.dim != model.n:
        raise DimensionMismatch(f"value set dim {v.dim} != model dim {model.n}")
    prior = propagate_prior(v, model, window, floor, method)
    meas = measurement_expansion(y, model, window, mode, floor, method)
    return combine_minplus(prior, meas)
