"""Homogeneous quadratic forms and finite min-plus sets of them.

A form is stored as a symmetric ``(n+1, n+1)`` matrix ``Q`` and represents

    value(x) = 0.5 * [x; 1]^T Q [x; 1]
             = 0.5 * (x^T q11 x + 2 q12^T x + q22).

A :class:`QuadSet` represents the pointwise minimum of its members.
"""
import json
import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .errors import DimensionMismatch, NonConvex

PD_TOL = 1e-10
SYM_TOL = 1e-12

# exhaustive face enumeration of the box QP is 3**n solves
_FACE_ENUM_MAX_DIM = 6


def _symmetrize(matrix, dim=None):
    Q = np.array(matrix, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 2:
        raise DimensionMismatch(f"expected a square (n+1)x(n+1) matrix, got shape {Q.shape}")
    if dim is not None and Q.shape[0] != dim + 1:
        raise DimensionMismatch(f"matrix shape {Q.shape} does not match dim={dim}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("quadratic form matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(Q))))
    if np.max(np.abs(Q - Q.T)) > SYM_TOL * scale:
        raise ValueError("quadratic form matrix is not symmetric")
    return 0.5 * (Q + Q.T)


class QuadForm:
    """One min-plus basis element ``0.5 [x;1]^T Q [x;1]``."""

    __slots__ = ("dim", "matrix")

    def __init__(self, matrix, dim=None):
        Q = _symmetrize(matrix, dim)
        Q.setflags(write=False)
        self.matrix = Q
        self.dim = Q.shape[0] - 1

    @classmethod
    def from_blocks(cls, q11, q12, q22):
        q11 = np.atleast_2d(np.asarray(q11, dtype=float))
        q12 = np.asarray(q12, dtype=float).reshape(-1)
        n = q11.shape[0]
        Q = np.empty((n + 1, n + 1))
        Q[:n, :n] = q11
        Q[:n, n] = q12
        Q[n, :n] = q12
        Q[n, n] = float(q22)
        return cls(Q)

    @classmethod
    def centered(cls, weight, center, offset=0.0):
        """``0.5 * (||x - center||^2_weight + offset)``."""
        N = np.atleast_2d(np.asarray(weight, dtype=float))
        c = np.asarray(center, dtype=float).reshape(-1)
        return cls.from_blocks(N, -N @ c, c @ N @ c + offset)

    @property
    def q11(self):
        return self.matrix[: self.dim, : self.dim]

    @property
    def q12(self):
        return self.matrix[: self.dim, self.dim]

    @property
    def q22(self):
        return self.matrix[self.dim, self.dim]

    def __call__(self, x):
        return evaluate(self, x)

    def __eq__(self, other):
        return isinstance(other, QuadForm) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __repr__(self):
        return f"QuadForm(dim={self.dim}, matrix={self.matrix.tolist()!r})"


class QuadSet:
    """Finite, ordered, non-empty collection of forms; represents their
    pointwise minimum.  Stored as one stacked ``(M, n+1, n+1)`` array."""

    __slots__ = ("matrices",)

    def __init__(self, members):
        members = list(members)
        if not members:
            raise ValueError("QuadSet must be non-empty")
        dims = {q.dim for q in members}
        if len(dims) != 1:
            raise DimensionMismatch(f"QuadSet members have mixed dims {sorted(dims)}")
        mats = np.stack([q.matrix for q in members])
        mats.setflags(write=False)
        self.matrices = mats

    @classmethod
    def from_matrices(cls, mats, symmetric=False):
        """Build from a stacked array.  ``symmetric=True`` trusts the input
        (internal callers that construct sums of symmetric matrices)."""
        mats = np.array(mats, dtype=float)
        if mats.ndim != 3 or mats.shape[0] == 0:
            raise ValueError("expected a non-empty (M, n+1, n+1) array")
        if not symmetric:
            mats = np.stack([_symmetrize(m) for m in mats])
        obj = cls.__new__(cls)
        mats.setflags(write=False)
        obj.matrices = mats
        return obj

    @property
    def dim(self):
        return self.matrices.shape[1] - 1

    @property
    def members(self):
        return [QuadForm(m) for m in self.matrices]

    def __len__(self):
        return self.matrices.shape[0]

    def __getitem__(self, i):
        return QuadForm(self.matrices[i])

    def __iter__(self):
        return iter(self.members)

    def subset(self, indices):
        return QuadSet.from_matrices(self.matrices[np.asarray(indices, dtype=int)], symmetric=True)

    def __call__(self, x):
        return eval_set(self, x)[0]

    def __repr__(self):
        return f"QuadSet(dim={self.dim}, size={len(self)})"


# ---------------------------------------------------------------------------
# operations


def _state(x, dim):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != dim:
        raise DimensionMismatch(f"state has length {x.shape[0]}, expected {dim}")
    return x


def _points(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, dim) if dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionMismatch(f"points of shape {X.shape} do not match dim={dim}")
    return X


def evaluate(q, x):
    """Value ``0.5 [x;1]^T Q [x;1]``."""
    x = _state(x, q.dim)
    return float(0.5 * (x @ q.q11 @ x + 2.0 * (q.q12 @ x) + q.q22))


def evaluate_many(q, X):
    X = _points(X, q.dim)
    return _kernels.quad_values(q.matrix[None], X)[0]


def eval_set(s, x):
    """Minimum member value at ``x`` and the lowest index achieving it."""
    x = _state(x, s.dim)
    vals, idx = _kernels.set_min(s.matrices, x[None, :])
    return float(vals[0]), int(idx[0])


def eval_set_many(s, X):
    """Vectorized :func:`eval_set` over points ``X`` of shape (P, n)."""
    X = _points(X, s.dim)
    return _kernels.set_min(s.matrices, X)


def member_values(s, X):
    """All member values, shape (M, P)."""
    return _kernels.quad_values(s.matrices, _points(X, s.dim))


def min_eigenvalue(q):
    return float(np.linalg.eigvalsh(q.q11)[0])


def unconstrained_minimizer(q, tol=PD_TOL):
    """Vertex ``-q11^{-1} q12`` of a strictly convex form.

    Raises :class:`NonConvex` when the smallest eigenvalue of ``q11`` does not
    exceed ``tol``.
    """
    lam = min_eigenvalue(q)
    if not lam > tol:
        raise NonConvex(f"smallest eigenvalue of q11 is {lam:.3e} <= {tol:.1e}")
    L = np.linalg.cholesky(q.q11)
    z = np.linalg.solve(L, -q.q12)
    return np.linalg.solve(L.T, z)


def box_argmin(H, g, lo, hi):
    """Minimizers of ``0.5 x^T H_m x + g_m^T x`` over ``lo <= x <= hi`` for
    stacked positive definite ``H`` (M, n, n) and ``g`` (M, n).

    Small ``n``: every face of the box is tried (free / at lower / at upper
    per coordinate); the global minimizer is stationary on one of them.
    """
    n = g.shape[1]
    if n <= _FACE_ENUM_MAX_DIM:
        return _kernels.box_qp(H, g, lo, hi)
    out = np.empty(g.shape)
    for m in range(g.shape[0]):
        Hm, gm = H[m], g[m]
        res = minimize(
            lambda x: 0.5 * x @ Hm @ x + gm @ x,
            np.clip(np.zeros(n), lo, hi),
            jac=lambda x: Hm @ x + gm,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10000},
        )
        out[m] = np.clip(res.x, lo, hi)
    return out


def windowed_argmin(q, w, grid_fallback=True, tol=PD_TOL):
    """Minimizer of ``q`` restricted to the window box, and its value.

    Convex forms: the vertex when it lies in the box, otherwise the exact
    box-constrained minimizer.  Non-convex forms: best point of the window's
    full sample grid (or :class:`NonConvex` when ``grid_fallback`` is off).
    """
    if w.dim != q.dim:
        raise DimensionMismatch(f"window dim {w.dim} != form dim {q.dim}")
    lo, hi = w.lower, w.upper
    try:
        x = unconstrained_minimizer(q, tol)
    except NonConvex:
        if not grid_fallback:
            raise
        pts = w.sample_grid()
        vals = evaluate_many(q, pts)
        i = int(np.argmin(vals))
        return pts[i].copy(), float(vals[i])
    if not (np.all(x >= lo) and np.all(x <= hi)):
        x = box_argmin(q.q11[None], q.q12[None], lo, hi)[0]
    return x, evaluate(q, x)


def combine_minplus(a, b):
    """Min-plus product: member ``(j, l)`` is ``Q_j + Q_l``, lexicographic.

    ``min(result) == min(a) + min(b)`` pointwise.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot combine dims {a.dim} and {b.dim}")
    mats = (a.matrices[:, None] + b.matrices[None, :]).reshape(-1, a.dim + 1, a.dim + 1)
    return QuadSet.from_matrices(mats, symmetric=True)


def add_constant(s, c):
    """Shift every member's value by ``c``."""
    mats = s.matrices.copy()
    mats[:, s.dim, s.dim] += 2.0 * float(c)
    return QuadSet.from_matrices(mats, symmetric=True)


# ---------------------------------------------------------------------------
# JSON


def to_json_obj(s):
    return [{"dim": s.dim, "matrix": m.ravel().tolist()} for m in s.matrices]


def from_json_obj(obj):
    if not isinstance(obj, list) or not obj:
        raise ValueError("QuadSet JSON must be a non-empty array")
    members = []
    for k, item in enumerate(obj):
        try:
            n = int(item["dim"])
            flat = np.asarray(item["matrix"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"member {k}: expected keys 'dim' and 'matrix'") from exc
        if n < 1 or flat.shape != ((n + 1) ** 2,):
            raise DimensionMismatch(f"member {k}: matrix needs {(n + 1) ** 2} entries for dim={n}")
        members.append(QuadForm(flat.reshape(n + 1, n + 1), dim=n))
    return QuadSet(members)


def dumps(s):
    return json.dumps(to_json_obj(s))


def loads(text):
    return from_json_obj(json.loads(text))


def save(s, path):
    with open(path, "w") as fh:
        json.dump(to_json_obj(s), fh, indent=1)


def load(path):
    with open(path) as fh:
        return from_json_obj(json.load(fh))
