import numpy as np
import pytest

from minplus import ModelSpec, OutOfDomain
from minplus.oracles import GridSpec, GridValue, dp_filter, dp_step, dp_values, dump_grid_csv, riccati_filter


def scalar_model(B=1.0, H=1.0, **kw):
    base = dict(B=[[B]], Q_eta=[[1.0]], R=[[1.0]], N0=[[1.0]], x0_bar=[0.0], F=[[1.0]], H=[[H]])
    base.update(kw)
    return ModelSpec(**base)


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec([0.0], [1.0], points=10)
    with pytest.raises(ValueError):
        GridSpec([1.0], [0.0])
    g = GridSpec.for_model(scalar_model(), [-1.0], [1.0])
    assert g.w_lower[0] == -6.0 and g.w_upper[0] == 6.0


def test_dp_zero_fixed_point():
    m = ModelSpec(
        B=[[0.0], [0.0]], Q_eta=[[1.0]], R=[[1.0]], N0=np.eye(2), x0_bar=[0, 0], F=np.eye(2), H=[[0.0, 0.0]]
    )
    g = GridSpec.for_model(m, [-1, -1], [1, 1], points=33, w_points=11)
    V = GridValue(g, np.zeros(g.shape))
    V1, _ = dp_step(V, [0.0], m, g)
    assert np.all(V1.values == 0.0)


def test_dp_quadratic_linear_matches_analytic():
    # V = 0.5 x^2, x_k = x + w: min_w 0.5 (x+w)^2 + 0.5 w^2 = 0.25 x^2; plus 0.5 (y - x)^2
    m = scalar_model()
    g = GridSpec([-2.0], [2.0], points=401, w_lower=[-4.0], w_upper=[4.0], w_points=801)
    xs = g.nodes()
    V = GridValue(g, 0.5 * xs[:, 0] ** 2)
    V1, rep = dp_step(V, [0.5], m, g)
    exact = 0.25 * xs[:, 0] ** 2 + 0.5 * (0.5 - xs[:, 0]) ** 2
    inner = np.abs(xs[:, 0]) < 1.0  # keep A(x) + w* well inside the grid
    h = 4.0 / 400
    # multilinear interpolation of a curvature-1 function errs by <= h^2/8
    assert np.max(np.abs(V1.values.ravel() - exact)[inner]) <= h**2 / 8 + rep.bound + 1e-12


def test_dp_monotone_and_constant_shift():
    rng = np.random.default_rng(0)
    m = scalar_model(H=0.5)
    g = GridSpec([-2.0], [2.0], points=65, w_lower=[-3.0], w_upper=[3.0], w_points=61)
    a = rng.uniform(0, 2, size=g.shape)
    b = a + rng.uniform(0, 1, size=g.shape)
    Va, _ = dp_step(GridValue(g, a), [0.3], m, g)
    Vb, _ = dp_step(GridValue(g, b), [0.3], m, g)
    assert np.all(Va.values <= Vb.values + 1e-14)
    Vc, _ = dp_step(GridValue(g, a + 2.5), [0.3], m, g)
    np.testing.assert_allclose(Vc.values, Va.values + 2.5, atol=1e-12)


def test_out_of_domain_counting():
    m = scalar_model(B=0.0, F=[[10.0]])
    g = GridSpec([-1.0], [1.0], points=33, w_lower=[-1.0], w_upper=[1.0], w_points=5)
    V = GridValue(g, np.zeros(g.shape))
    _, _, rep = dp_values(V, [0.0], m, g.nodes(), g)
    assert rep.out_of_domain > 0 and rep.clamped > 0
    with pytest.raises(OutOfDomain):
        dp_values(V, [0.0], m, g.nodes(), g, strict=True)


def test_riccati_no_measurement_information():
    m = scalar_model(H=0.0, x0_bar=[1.5])
    est = riccati_filter(m, np.zeros((5, 1)))
    np.testing.assert_allclose(est[:, 0], 1.5)


def test_riccati_scalar_hand_derivation():
    # prior precision 1, x_k = x_{k+1} + w with Q_eta = 1: predicted precision
    # (1 + 1)^-1 = 0.5; adding R = 1 gives 1.5 and mean (0.5 * 0 + 1 * y) / 1.5
    m = scalar_model()
    est = riccati_filter(m, [[3.0]])
    assert est[1, 0] == pytest.approx(2.0)


def test_riccati_scale_invariance():
    rng = np.random.default_rng(1)
    kw = dict(B=[[0.0], [0.5]], x0_bar=[0.1, 0.2], F=[[1.0, 0.1], [0.0, 1.0]], H=[[1.0, 0.0]])
    ys = rng.normal(size=(20, 1))
    a = riccati_filter(ModelSpec(Q_eta=[[1.0]], R=[[2.0]], N0=np.eye(2), **kw), ys)
    b = riccati_filter(ModelSpec(Q_eta=[[7.0]], R=[[14.0]], N0=7 * np.eye(2), **kw), ys)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_riccati_requires_linear():
    m = ModelSpec(
        B=[[1.0]], Q_eta=[[1.0]], R=[[1.0]], N0=[[1.0]], x0_bar=[0.0], F=[[1.0]], output_map=lambda X: X**3
    )
    with pytest.raises(ValueError):
        riccati_filter(m, [[0.0]])


def test_dp_filter_tracks_riccati():
    m = scalar_model(B=0.3)
    ys = np.array([[0.5], [0.7], [0.2], [0.9]])
    g = GridSpec.for_model(m, [-2.0], [3.0], points=501, w_points=241)
    est, _ = dp_filter(m, ys, g)
    ref = riccati_filter(m, ys)
    assert np.max(np.abs(est - ref)) <= 2 * 5.0 / 500


def test_dump_grid_csv(tmp_path):
    g = GridSpec([0.0, 0.0], [1.0, 1.0], points=33)
    V = GridValue(g, np.arange(33 * 33, dtype=float))
    p = tmp_path / "v.csv"
    dump_grid_csv(V, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "x1,x2,value" and len(rows) == 33 * 33 + 1
