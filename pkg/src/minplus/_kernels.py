"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``MINPLUS_DISABLE_NUMBA`` is unset or ``0``.  Both paths are always
importable as ``*_numpy`` / ``*_numba`` so they can be cross-checked and
benchmarked; ``*_numba`` silently aliases the numpy version when numba is
unavailable.
"""
import os
from itertools import product

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False


def _flag_disabled():
    return os.environ.get("MINPLUS_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------------------
# pure numpy


def quad_values_numpy(mats, X):
    """Values ``0.5 [x;1]^T Q [x;1]`` for every form (rows) at every point (cols).

    ``mats`` has shape (M, n+1, n+1), ``X`` has shape (P, n).
    """
    n = X.shape[1]
    q11 = mats[:, :n, :n]
    q12 = mats[:, :n, n]
    q22 = mats[:, n, n]
    quad = np.einsum("pi,mij,pj->mp", X, q11, X)
    lin = q12 @ X.T
    return 0.5 * (quad + 2.0 * lin + q22[:, None])


def set_min_numpy(mats, X):
    vals = quad_values_numpy(mats, X)
    idx = np.argmin(vals, axis=0)
    return vals[idx, np.arange(X.shape[0])], idx


def lloyd_numpy(points, centers, max_iter):
    """Lloyd iterations from the given initial centers.

    Returns ``(labels, centers, iterations)``.  Empty clusters keep their
    previous center.  Stops when no label changes.
    """
    centers = centers.copy()
    k = centers.shape[0]
    labels = np.full(points.shape[0], -1, dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1).astype(np.int64)
        if np.array_equal(new, labels):
            break
        labels = new
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=k)
        nz = counts > 0
        centers[nz] = sums[nz] / counts[nz, None]
    return labels, centers, it


def face_patterns(n):
    """Box faces as rows of codes 0 (free), 1 (at lower), 2 (at upper);
    the all-free face first."""
    return np.array(list(product((0, 1, 2), repeat=n)), dtype=np.int64).reshape(-1, n)


def box_qp_numpy(H, g, lo, hi):
    """Minimize ``0.5 x^T H_m x + g_m^T x`` over the box for every m.

    ``H`` (M, n, n) must be positive definite.  Each face is solved for all
    members at once; the best feasible face point wins, earliest face on ties.
    """
    M, n = g.shape
    span = np.maximum(hi - lo, 1.0)
    best = np.full(M, np.inf)
    out = np.empty((M, n))
    for pat in face_patterns(n):
        free = pat == 0
        x = np.tile(np.where(pat == 1, lo, hi), (M, 1))
        ok = np.ones(M, dtype=bool)
        if free.any():
            fixed = ~free
            rhs = -(g[:, free] + np.einsum("mij,mj->mi", H[:, free][:, :, fixed], x[:, fixed]))
            x[:, free] = np.linalg.solve(H[:, free][:, :, free], rhs[..., None])[..., 0]
            ok = np.all((x >= lo - 1e-12 * span) & (x <= hi + 1e-12 * span), axis=1)
        x = np.clip(x, lo, hi)
        val = 0.5 * np.einsum("mi,mij,mj->m", x, H, x) + np.einsum("mi,mi->m", g, x)
        better = ok & (val < best)
        best[better] = val[better]
        out[better] = x[better]
    return out


# ---------------------------------------------------------------------------
# numba

if HAVE_NUMBA:

    @njit(cache=True)
    def quad_values_numba(mats, X):
        M = mats.shape[0]
        P, n = X.shape
        out = np.empty((M, P))
        for m in range(M):
            for p in range(P):
                quad = 0.0
                for i in range(n):
                    row = 0.0
                    for j in range(n):
                        row += mats[m, i, j] * X[p, j]
                    quad += X[p, i] * row
                lin = 0.0
                for i in range(n):
                    lin += mats[m, i, n] * X[p, i]
                out[m, p] = 0.5 * (quad + 2.0 * lin + mats[m, n, n])
        return out

    @njit(cache=True)
    def set_min_numba(mats, X):
        vals = quad_values_numba(mats, X)
        M, P = vals.shape
        best = np.empty(P)
        idx = np.zeros(P, dtype=np.int64)
        for p in range(P):
            b = vals[0, p]
            bi = 0
            for m in range(1, M):
                if vals[m, p] < b:
                    b = vals[m, p]
                    bi = m
            best[p] = b
            idx[p] = bi
        return best, idx

    @njit(cache=True)
    def lloyd_numba(points, centers, max_iter):
        centers = centers.copy()
        P, d = points.shape
        k = centers.shape[0]
        labels = np.full(P, -1, dtype=np.int64)
        it = 0
        for it in range(1, max_iter + 1):
            changed = False
            for p in range(P):
                best = np.inf
                bi = 0
                for c in range(k):
                    s = 0.0
                    for j in range(d):
                        diff = points[p, j] - centers[c, j]
                        s += diff * diff
                    if s < best:
                        best = s
                        bi = c
                if bi != labels[p]:
                    changed = True
                labels[p] = bi
            if not changed:
                break
            sums = np.zeros((k, d))
            counts = np.zeros(k, dtype=np.int64)
            for p in range(P):
                c = labels[p]
                counts[c] += 1
                for j in range(d):
                    sums[c, j] += points[p, j]
            for c in range(k):
                if counts[c] > 0:
                    for j in range(d):
                        centers[c, j] = sums[c, j] / counts[c]
        return labels, centers, it

    @njit(cache=True)
    def _solve_small(A, b):
        """Gaussian elimination with partial pivoting (tiny dense systems)."""
        k = A.shape[0]
        A = A.copy()
        b = b.copy()
        for c in range(k):
            piv = c
            for r in range(c + 1, k):
                if abs(A[r, c]) > abs(A[piv, c]):
                    piv = r
            if piv != c:
                for j in range(k):
                    tmp = A[c, j]
                    A[c, j] = A[piv, j]
                    A[piv, j] = tmp
                tmp = b[c]
                b[c] = b[piv]
                b[piv] = tmp
            for r in range(c + 1, k):
                f = A[r, c] / A[c, c]
                for j in range(c, k):
                    A[r, j] -= f * A[c, j]
                b[r] -= f * b[c]
        x = np.empty(k)
        for c in range(k - 1, -1, -1):
            s = b[c]
            for j in range(c + 1, k):
                s -= A[c, j] * x[j]
            x[c] = s / A[c, c]
        return x

    @njit(cache=True)
    def box_qp_numba(H, g, lo, hi, patterns):
        M, n = g.shape
        out = np.empty((M, n))
        span = np.empty(n)
        for i in range(n):
            span[i] = max(hi[i] - lo[i], 1.0)
        for m in range(M):
            best = np.inf
            for p in range(patterns.shape[0]):
                x = np.empty(n)
                nfree = 0
                for i in range(n):
                    if patterns[p, i] == 0:
                        nfree += 1
                        x[i] = 0.0
                    elif patterns[p, i] == 1:
                        x[i] = lo[i]
                    else:
                        x[i] = hi[i]
                ok = True
                if nfree > 0:
                    fidx = np.empty(nfree, dtype=np.int64)
                    k = 0
                    for i in range(n):
                        if patterns[p, i] == 0:
                            fidx[k] = i
                            k += 1
                    A = np.empty((nfree, nfree))
                    b = np.empty(nfree)
                    for a in range(nfree):
                        ia = fidx[a]
                        r = -g[m, ia]
                        for j in range(n):
                            if patterns[p, j] != 0:
                                r -= H[m, ia, j] * x[j]
                        b[a] = r
                        for c in range(nfree):
                            A[a, c] = H[m, ia, fidx[c]]
                    sol = _solve_small(A, b)
                    for a in range(nfree):
                        x[fidx[a]] = sol[a]
                    for i in range(n):
                        if x[i] < lo[i] - 1e-12 * span[i] or x[i] > hi[i] + 1e-12 * span[i]:
                            ok = False
                if not ok:
                    continue
                for i in range(n):
                    x[i] = min(max(x[i], lo[i]), hi[i])
                val = 0.0
                for i in range(n):
                    row = 0.0
                    for j in range(n):
                        row += H[m, i, j] * x[j]
                    val += 0.5 * x[i] * row + g[m, i] * x[i]
                if val < best:
                    best = val
                    for i in range(n):
                        out[m, i] = x[i]
        return out

else:  # pragma: no cover
    quad_values_numba = quad_values_numpy
    set_min_numba = set_min_numpy
    lloyd_numba = lloyd_numpy

    def box_qp_numba(H, g, lo, hi, patterns):
        return box_qp_numpy(H, g, lo, hi)


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def quad_values(mats, X):
    mats, X = _as_f64(mats), _as_f64(X)
    if USE_NUMBA:
        return quad_values_numba(mats, X)
    return quad_values_numpy(mats, X)


def set_min(mats, X):
    mats, X = _as_f64(mats), _as_f64(X)
    if USE_NUMBA:
        return set_min_numba(mats, X)
    return set_min_numpy(mats, X)


def lloyd(points, centers, max_iter):
    points, centers = _as_f64(points), _as_f64(centers)
    if USE_NUMBA:
        return lloyd_numba(points, centers, int(max_iter))
    return lloyd_numpy(points, centers, int(max_iter))


def box_qp(H, g, lo, hi):
    H, g = _as_f64(H), _as_f64(g)
    lo, hi = _as_f64(lo), _as_f64(hi)
    if USE_NUMBA:
        return box_qp_numba(H, g, lo, hi, face_patterns(g.shape[1]))
    return box_qp_numpy(H, g, lo, hi)
