"""Built-in example systems."""
import numpy as np

from ..propagator import ModelSpec

DT = 0.1
CUBIC_SCALE = 40.0


def forward_cubic_demo():
    """Forward discretization of the double integrator with cubic output:
    ``x1' = w``, ``x2' = x1``, ``y = x2^3 / 40``, sampled at 0.1 s."""
    F = np.array([[1.0, 0.0], [DT, 1.0]])
    B = np.array([[DT], [0.0]])
    return F, B


def cubic_output(X):
    return (X[:, 1:2] ** 3) / CUBIC_SCALE


def backward_affine(F_fwd, f_fwd=None):
    """``(F_bwd, f_bwd)`` with ``x_k = F_bwd x_{k+1} + f_bwd`` inverting
    ``x_{k+1} = F_fwd x_k + f_fwd``."""
    F_fwd = np.atleast_2d(np.asarray(F_fwd, dtype=float))
    f_fwd = np.zeros(F_fwd.shape[0]) if f_fwd is None else np.asarray(f_fwd, dtype=float)
    F_bwd = np.linalg.inv(F_fwd)
    return F_bwd, -F_bwd @ f_fwd


def cubic_demo(N0=None, Q_eta=1.0, R=1.0, x0_bar=(0.0, 0.0), phi0=0.0, B_tilde=None):
    F_fwd, B = forward_cubic_demo()
    F_bwd, f_bwd = backward_affine(F_fwd)
    return ModelSpec(
        B=B if B_tilde is None else np.asarray(B_tilde, dtype=float).reshape(2, -1),
        Q_eta=np.atleast_2d(Q_eta),
        R=np.atleast_2d(R),
        N0=np.eye(2) if N0 is None else N0,
        x0_bar=np.asarray(x0_bar, dtype=float),
        phi0=phi0,
        F=F_bwd,
        f=f_bwd,
        output_map=cubic_output,
        output_dims=(1,),
        name="cubic_demo",
    )
