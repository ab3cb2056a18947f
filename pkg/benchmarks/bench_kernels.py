"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20]

Every kernel is called once before timing so numba compilation is excluded.
Outputs of the two paths are checked for agreement first.
"""
import argparse
import time

import numpy as np

from minplus import _kernels as K


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    n = 2
    M, P = 96, 4225  # unpruned set size and full window grid of the demo
    A = rng.normal(size=(M, n + 1, n + 1))
    mats = A @ A.transpose(0, 2, 1)
    X = rng.uniform(-1, 1, size=(P, n))
    pts = np.concatenate([rng.normal(c, 0.1, size=(32, n)) for c in rng.uniform(-1, 1, size=(3, n))])
    init = pts[rng.choice(pts.shape[0], 12, replace=False)]
    H = mats[:, :n, :n] + 0.1 * np.eye(n)
    g = 3.0 * mats[:, :n, n]
    lo, hi = -np.ones(n), np.ones(n)
    pats = K.face_patterns(n)
    return {
        "quad_values": (lambda: K.quad_values_numpy(mats, X), lambda: K.quad_values_numba(mats, X)),
        "set_min": (lambda: K.set_min_numpy(mats, X), lambda: K.set_min_numba(mats, X)),
        "lloyd": (lambda: K.lloyd_numpy(pts, init, 100), lambda: K.lloyd_numba(pts, init, 100)),
        "box_qp": (lambda: K.box_qp_numpy(H, g, lo, hi), lambda: K.box_qp_numba(H, g, lo, hi, pats)),
    }


def _agree(a, b):
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind in "iu" or b.dtype.kind in "iu":
        return np.array_equal(a, b) or np.isscalar(a)
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  agree")
    for name, (f_np, f_nb) in cases(rng).items():
        ok = _agree(f_np(), f_nb())
        t_np = _best(f_np, args.repeat)
        t_nb = _best(f_nb, args.repeat)
        print(f"{name:<12} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}  {ok}")


if __name__ == "__main__":
    main()
