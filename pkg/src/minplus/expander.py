"""Min-plus quadratic majorant expansions of scalar functions over a window.

Each sub-box of the window gets one convex quadratic fitted to the function
on the sub-box samples, with a floor on the curvature and the requirement
that it lie on or above the function at every sample of the *whole* window.
The default solves that as one inequality-constrained least-squares problem;
``method='lift'`` fits first and then raises the constant term.  Either way
the pointwise minimum of the set majorizes the function on the window's
sample grid.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy.optimize import nnls

from .errors import FitFailed, RankDeficient
from .quadform import QuadForm, QuadSet, evaluate_many
from .window import Window

__all__ = [
    "Window",
    "ScalarField",
    "output_residual",
    "output_cross",
    "output_squared",
    "dyn_quadratic",
    "dyn_linear",
    "custom",
    "design_matrix",
    "solve_constrained_lsq",
    "fit_partition",
    "expand",
]

CONVEX_FLOOR = 1e-8


@dataclass(frozen=True)
class ScalarField:
    """A vectorized scalar function of the state.

    ``func`` maps points of shape (P, n) to values of shape (P,); it may only
    read the coordinates listed in ``dims``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dims: Tuple[int, ...]
    kind: str = "custom"

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.func(X), dtype=float).reshape(X.shape[0])


def _dims(dims, n=None):
    if dims is None:
        if n is None:
            raise ValueError("active dims required")
        dims = range(n)
    return tuple(sorted(int(d) for d in dims))


def _as_matrix(R):
    return np.atleast_2d(np.asarray(R, dtype=float))


def output_residual(C, R, y, dims):
    """``x -> 0.5 ||y - C(x)||^2_R`` for the measurement ``y`` at hand."""
    R = _as_matrix(R)
    y = np.atleast_1d(np.asarray(y, dtype=float))

    def g(X):
        r = y[None, :] - np.asarray(C(X), dtype=float).reshape(X.shape[0], -1)
        return 0.5 * np.einsum("pi,ij,pj->p", r, R, r)

    return ScalarField(g, _dims(dims), "output_residual")


def output_cross(C, R, y, dims):
    """``x -> -y^T R C(x)`` (the measurement cross term)."""
    R = _as_matrix(R)
    Ry = R @ np.atleast_1d(np.asarray(y, dtype=float))

    def g(X):
        return -np.asarray(C(X), dtype=float).reshape(X.shape[0], -1) @ Ry

    return ScalarField(g, _dims(dims), "output_cross")


def output_squared(C, R, dims):
    """``x -> 0.5 ||C(x)||^2_R``."""
    R = _as_matrix(R)

    def g(X):
        c = np.asarray(C(X), dtype=float).reshape(X.shape[0], -1)
        return 0.5 * np.einsum("pi,ij,pj->p", c, R, c)

    return ScalarField(g, _dims(dims), "output_squared")


def dyn_quadratic(A, M, dims):
    """``x -> 0.5 A(x)^T M A(x)``."""
    M = _as_matrix(M)

    def g(X):
        a = np.asarray(A(X), dtype=float)
        return 0.5 * np.einsum("pi,ij,pj->p", a, M, a)

    return ScalarField(g, _dims(dims), "dyn_quadratic")


def dyn_linear(A, row, dims):
    """``x -> row . A(x)``."""
    row = np.asarray(row, dtype=float).reshape(-1)

    def g(X):
        return np.asarray(A(X), dtype=float) @ row

    return ScalarField(g, _dims(dims), "dyn_linear")


def custom(func, dims):
    return ScalarField(func, _dims(dims), "custom")


# ---------------------------------------------------------------------------
# least squares


@lru_cache(maxsize=None)
def _triu(d):
    return np.triu_indices(d)


def design_matrix(U):
    """Monomial columns ``[u_i u_j (i<=j)], [u_i], 1`` for points ``U`` (P, d)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    d = U.shape[1]
    iu, ju = _triu(d)
    return np.hstack([U[:, iu] * U[:, ju], U, np.ones((U.shape[0], 1))])


def _layout(ncols):
    d = 0
    while d * (d + 1) // 2 + d + 1 < ncols:
        d += 1
    if d * (d + 1) // 2 + d + 1 != ncols:
        raise ValueError(f"{ncols} columns is not a full quadratic monomial layout")
    return d


def _hessian_of(z, d):
    """Symmetric ``A`` with ``u^T A u`` equal to the quadratic monomial part."""
    nq = d * (d + 1) // 2
    iu, ju = _triu(d)
    A = np.zeros((d, d))
    A[iu, ju] = z[:nq]
    return 0.5 * (A + A.T)


def _coeffs_of(A, rest):
    d = A.shape[0]
    iu, ju = _triu(d)
    quad = np.where(iu == ju, A[iu, ju], 2.0 * A[iu, ju])
    return np.concatenate([quad, rest])


def _quad_row(v):
    """Coefficient row ``r`` with ``r . z == v^T A(z) v``."""
    row = design_matrix(np.asarray(v, dtype=float)[None, :])[0]
    d = len(v)
    row[d * (d + 1) // 2 :] = 0.0
    return row


def _lsi(D, t, G, h):
    """``min ||D z - t||`` subject to ``G z >= h`` for full-column-rank ``D``.

    Reduced to least distance programming and solved through NNLS
    (Lawson & Hanson's LSI -> LDP -> NNLS chain).  Returns ``None`` when the
    constraints are infeasible.
    """
    U, sv, Vt = np.linalg.svd(D, full_matrices=False)
    T = Vt.T / sv  # z = T (u + U^T t)
    base = U.T @ t
    E = G @ T
    f = h - E @ base
    k = E.shape[1]
    M = np.vstack([E.T, f[None, :]])
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    lam, _ = nnls(M, rhs, maxiter=50 * M.shape[1] + 100)
    r = M @ lam - rhs
    if abs(r[k]) < 1e-14 or np.linalg.norm(r) < 1e-14:
        return None
    u = -r[:k] / r[k]
    return T @ (u + base)


def solve_constrained_lsq(design, targets, floor=CONVEX_FLOOR, majorant=None, max_cuts=60):
    """Least-squares coefficients ``z`` for ``design @ z ~ targets``.

    ``design`` uses the :func:`design_matrix` column layout (for one active
    dimension ``z = [a2, a1, a0]``).  The Hessian ``A`` of the quadratic part
    (``u^T A u``) is kept above ``floor``; for one dimension this is
    ``a2 >= floor``.  ``majorant = (design_all, targets_all)`` additionally
    imposes ``design_all @ z >= targets_all``.
    """
    D = np.asarray(design, dtype=float)
    t = np.asarray(targets, dtype=float).reshape(-1)
    d = _layout(D.shape[1])
    if D.shape[0] < D.shape[1] or np.linalg.matrix_rank(D) < D.shape[1]:
        raise RankDeficient(f"design matrix {D.shape} is rank deficient")
    z, *_ = np.linalg.lstsq(D, t, rcond=None)
    if majorant is None:
        if np.linalg.eigvalsh(_hessian_of(z, d))[0] >= floor:
            return z
        if d == 1:
            # single active bound: optimum sits on it
            rest, *_ = np.linalg.lstsq(D[:, 1:], t - floor * D[:, 0], rcond=None)
            return np.concatenate([[floor], rest])
        Gm, hm = np.zeros((0, D.shape[1])), np.zeros(0)
    else:
        Gm = np.asarray(majorant[0], dtype=float)
        hm = np.asarray(majorant[1], dtype=float).reshape(-1)
    # PSD floor as an outer approximation by cuts v^T A v >= floor, refined
    # with the most violated eigenvector until the floor holds
    cuts = [_quad_row(e) for e in np.eye(d)]
    for _ in range(max_cuts):
        G = np.vstack([Gm, np.array(cuts)])
        h = np.concatenate([hm, np.full(len(cuts), floor)])
        z = _lsi(D, t, G, h)
        if z is None:
            raise FitFailed("majorant/convexity constraints are infeasible")
        lam, V = np.linalg.eigh(_hessian_of(z, d))
        if lam[0] >= floor:
            return z
        # NNLS meets active cuts only to solver precision
        if lam[0] >= floor - 1e-9 * max(1.0, np.abs(z).max()):
            break
        cuts.append(_quad_row(V[:, 0]))
    # clip the Hessian onto the floor; callers re-lift to restore majorization
    A = (V * np.maximum(lam, floor)) @ V.T
    return _coeffs_of(0.5 * (A + A.T), z[d * (d + 1) // 2 :])


# ---------------------------------------------------------------------------
# fitting


def _embed(n, dims, A, b, a0, shift):
    """Homogeneous form of ``u^T A u + b^T u + a0`` with ``u = x[dims] - shift``."""
    dims = list(dims)
    q11 = np.zeros((n, n))
    q12 = np.zeros(n)
    q11[np.ix_(dims, dims)] = 2.0 * A
    q12[dims] = b - 2.0 * A @ shift
    q22 = 2.0 * (shift @ A @ shift - b @ shift + a0)
    return QuadForm.from_blocks(q11, q12, q22)


LIFT = "lift"
CONSTRAINED = "constrained"
FIT_METHODS = (LIFT, CONSTRAINED)


def fit_partition(g, w, box, floor=CONVEX_FLOOR, method=CONSTRAINED):
    """One convex quadratic fitted to ``g`` on sub-box ``box = (lo, hi)`` that
    majorizes ``g`` on every sample of the full window ``w``.

    ``method='lift'`` fits the sub-box samples by least squares, then raises
    the constant term by the worst violation over the window.
    ``method='constrained'`` minimizes the same sub-box residual with the
    window-wide majorant inequalities imposed inside the solve.

    The returned form's ``q11`` restricted to ``g.dims`` has smallest
    eigenvalue at least ``floor``; rows/columns of other dimensions are zero.
    """
    if method not in FIT_METHODS:
        raise ValueError(f"unknown fit method {method!r}")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    dims = list(g.dims)
    if not dims:
        raise FitFailed("scalar field has no active dimensions", box=(lo, hi))
    pts = w.box_samples(lo, hi, dims)
    vals = g(pts)
    full = w.sample_grid(dims)
    full_vals = g(full)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(full_vals))):
        raise FitFailed("field is not finite on the window samples", box=(lo, hi))
    shift = 0.5 * (lo + hi)[dims]
    majorant = None
    if method == CONSTRAINED:
        majorant = (design_matrix(full[:, dims] - shift), full_vals)
    # A in u^T A u is half of q11; the curvature floor is stated on q11
    try:
        z = solve_constrained_lsq(design_matrix(pts[:, dims] - shift), vals, 0.5 * floor, majorant)
    except (RankDeficient, FitFailed) as exc:
        raise FitFailed(str(exc), box=(lo, hi)) from exc
    d = len(dims)
    nq = d * (d + 1) // 2
    A = _hessian_of(z, d)
    b, a0 = z[nq : nq + d], z[-1]
    q = _embed(w.dim, dims, A, b, a0, shift)
    for _ in range(3):
        gap = np.max(full_vals - evaluate_many(q, full))
        if gap <= 0.0:
            break
        # repeat in case rounding leaves a residual violation
        a0 = a0 + gap
        q = _embed(w.dim, dims, A, b, a0, shift)
    return q


def expand(g, w, floor=CONVEX_FLOOR, method=CONSTRAINED):
    """``partitions ** len(g.dims)`` window-wide majorants, one per sub-box,
    in lexicographic partition order."""
    return QuadSet([fit_partition(g, w, box, floor, method) for box in w.sub_boxes(g.dims)])
