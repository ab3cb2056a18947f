import numpy as np
import pytest

from minplus import FilterConfig, ModelSpec, PruneConfig, StepFailed, init, run, update
from minplus.filter_core import extract_estimate
from minplus.harness.models import cubic_demo, cubic_output, forward_cubic_demo
from minplus.oracles import GridSpec, dp_step, GridValue, riccati_filter
from minplus.propagator import propagate
from minplus.quadform import eval_set, eval_set_many, unconstrained_minimizer


def test_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(half_width=0.0)
    with pytest.raises(ValueError):
        FilterConfig(measurement_mode="both")
    with pytest.raises(ValueError):
        FilterConfig(fit_method="spline")


def test_init_examples():
    m = cubic_demo()
    st = init(m, FilterConfig())
    assert np.all(st.estimate == 0) and st.step == 0
    np.testing.assert_array_equal(st.window.lower, [-1, -1])
    np.testing.assert_array_equal(st.window.upper, [1, 1])
    m = cubic_demo(x0_bar=(0.3, -1.0), phi0=0.8)
    st = init(m, FilterConfig())
    assert eval_set(st.value, m.x0_bar)[0] == pytest.approx(0.4)
    np.testing.assert_allclose(unconstrained_minimizer(st.value[0]), st.estimate, atol=1e-14)


def test_zero_steps():
    m = cubic_demo()
    res = run(m, FilterConfig(), [])
    assert res.estimates.shape == (1, 2) and np.all(res.estimates[0] == m.x0_bar)
    assert res.card_pre == [] and res.final.step == 0


def test_update_estimate_certificate_and_window():
    m = cubic_demo(x0_bar=(0.0, 1.5))
    cfg = FilterConfig()
    st = init(m, cfg)
    y = np.array([0.3])
    grown = propagate(st.value, y, m, st.window)
    nxt = update(st, y, m, cfg)
    X = st.window.sample_grid()
    assert eval_set(grown, nxt.estimate)[0] <= eval_set_many(grown, X)[0].min() + 1e-12
    assert np.array_equal(nxt.window.center, nxt.estimate)
    assert st.window.contains(nxt.estimate)
    assert nxt.unpruned_size == len(grown) and len(nxt.value) <= cfg.prune.max_members


def test_one_step_vs_grid_dp():
    m = cubic_demo(x0_bar=(0.0, 2.0))
    cfg = FilterConfig()
    st = init(m, cfg)
    y = cubic_output(np.array([[0.0, 2.0]]))[0]
    nxt = update(st, y, m, cfg)
    grid = GridSpec.for_model(m, st.window.lower, st.window.upper, points=129, w_points=201)
    nodes = grid.nodes()
    r = nodes - m.x0_bar
    V0 = GridValue(grid, 0.5 * np.einsum("pi,ij,pj->p", r, m.N0, r))
    V1, _ = dp_step(V0, y, m, grid)
    x_dp = V1.argmin()[0]
    assert np.all(np.abs(nxt.estimate - x_dp) <= 2 * st.window.spacing() + 1e-12)


def test_linear_matches_riccati():
    rng = np.random.default_rng(5)
    F = np.array([[0.98, 0.1], [-0.05, 0.95]])
    m = ModelSpec(
        B=[[0.0], [0.3]], Q_eta=[[2.0]], R=[[4.0]], N0=np.eye(2), x0_bar=[0.2, -0.1], F=F, H=[[1.0, 0.5]]
    )
    ys = rng.normal(size=(30, 1))
    res = run(m, FilterConfig(half_width=50.0), ys)
    ref = riccati_filter(m, ys)
    assert np.max(np.abs(res.estimates - ref)) <= 1e-9
    assert set(res.card_post) == {1}


def test_constant_linear_system_converges():
    m = ModelSpec(B=[[0.5]], Q_eta=[[1.0]], R=[[1.0]], N0=[[1.0]], x0_bar=[0.0], F=[[1.0]], H=[[1.0]])
    res = run(m, FilterConfig(half_width=20.0), np.full((60, 1), 3.0))
    d = np.abs(np.diff(res.estimates[:, 0]))
    assert np.all(np.diff(d[10:]) <= 1e-12)
    assert res.estimates[-1, 0] == pytest.approx(3.0, abs=1e-3)


def simulate_demo(seed, T=40):
    F, B = forward_cubic_demo()
    rng = np.random.default_rng(seed)
    x = np.array([0.0, 2.0])
    ys = []
    for _ in range(T):
        x = F @ x + B[:, 0] * rng.normal(0, 0.05)
        ys.append(cubic_output(x[None])[0] + rng.normal(0, 0.5))
    return np.array(ys)


@pytest.mark.parametrize("strategy", ["cluster", "value"])
def test_cardinality_bound_and_determinism(strategy):
    m = cubic_demo()
    cfg = FilterConfig(prune=PruneConfig(max_members=5, strategy=strategy))
    ys = simulate_demo(2)
    a = run(m, cfg, ys)
    b = run(m, cfg, ys)
    assert max(a.card_post) <= 5
    assert np.array_equal(a.estimates, b.estimates)
    assert len(a.step_seconds) == len(ys)
    for k, e in enumerate(a.estimates[1:]):
        assert np.all(np.isfinite(e))


def test_step_failure_reports_index():
    m = cubic_demo()
    ys = [[0.1], [np.nan], [0.2]]
    with pytest.raises(StepFailed) as info:
        run(m, FilterConfig(), ys)
    assert info.value.step == 2


def test_extract_estimate_lowest_member():
    m = cubic_demo()
    st = init(m, FilterConfig())
    x, v, cat = extract_estimate(st.value, st.window)
    assert np.array_equal(x, m.x0_bar) and v == 0.0 and len(cat.values) == 1
