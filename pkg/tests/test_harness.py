import csv
from pathlib import Path
import math

import numpy as np
import pytest

from minplus import ConfigError
from minplus.cli import compare_pruning, main, oracle_check, rmse
from minplus.filter_core import run
from minplus.harness import config as C
from minplus.harness.models import backward_affine, cubic_output, forward_cubic_demo
from minplus.harness.simulate import (
    read_measurements,
    read_truth,
    simulate,
    simulate_config,
    write_measurements,
    write_truth,
)

HEADER = "step,x1_true,x2_true,y,x1_hat,x2_hat,card_pre,card_post,step_ms"

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_toml(out, T=12, extra=""):
    return f"""
[simulation]
T = {T}
seed = 7

[io]
out_dir = "{out}"
{extra}
"""


def write_cfg(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- config -----------------------------------------------------------------


def test_defaults_validate():
    cfg = C.from_dict({})
    assert cfg.simulation.T == 100 and cfg.simulation.seed == 42
    assert cfg.prune.max_members == 12 and cfg.filter.half_width == 1.0
    assert cfg.model_spec().n == 2


@pytest.mark.parametrize(
    "raw",
    [
        {"bogus": {}},
        {"simulation": {"steps": 5}},
        {"simulation": {"T": "ten"}},
        {"simulation": {"T": -1}},
        {"prune": {"strategy": "random"}},
        {"model": {"name": "pendulum"}},
        {"model": {"name": "affine"}},
        {"simulation": {"x0": [1.0, 2.0, 3.0]}},
        {"filter": {"half_width": 0.0}},
    ],
)
def test_config_rejects(raw):
    with pytest.raises(ConfigError):
        C.from_dict(raw)


def test_config_bad_toml():
    with pytest.raises(ConfigError):
        C.loads("[simulation\nT = 3")


def test_shipped_configs_load():
    for name in ("demo", "jump", "linear"):
        C.load(CONFIGS / f"{name}.toml")


def test_backward_map_consistency():
    rng = np.random.default_rng(0)
    for _ in range(20):
        F = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
        f = rng.normal(size=3)
        Fb, fb = backward_affine(F, f)
        X = rng.normal(size=(50, 3))
        back = (X @ F.T + f) @ Fb.T + fb
        assert np.max(np.abs(back - X)) <= 1e-12


# -- simulate ---------------------------------------------------------------


def demo_sim(x0, T, seed=0, **kw):
    F, B = forward_cubic_demo()
    return simulate(F, np.zeros(2), B, cubic_output, x0, T, seed, w_std=0.0, v_std=0.0, **kw)


def test_zero_noise_equilibrium():
    tr = demo_sim([0.0, 0.0], 20)
    assert np.all(tr.states == 0) and np.all(tr.measurements == 0)


def test_zero_noise_integrator():
    tr = demo_sim([1.0, 0.0], 20)
    k = np.arange(21)
    np.testing.assert_allclose(tr.states[:, 1], 0.1 * k, atol=1e-12)
    np.testing.assert_allclose(tr.measurements[:, 0], (0.1 * k[1:]) ** 3 / 40, atol=1e-12)


def test_jump_injection():
    tr = demo_sim([0.0, 0.0], 5, jump_step=3, jump=[0.0, 6.0])
    np.testing.assert_array_equal(tr.states[:, 1], [0, 0, 0, 6, 6, 6])


def test_uniform_noise_std():
    F, B = forward_cubic_demo()
    tr = simulate(F, np.zeros(2), B, cubic_output, [0, 0], 20000, 1, noise="uniform", w_std=0.0, v_std=0.5)
    assert np.std(tr.measurements) == pytest.approx(0.5, rel=0.02)
    assert np.max(np.abs(tr.measurements)) <= 0.5 * math.sqrt(3)


def test_csv_round_trip_and_determinism(tmp_path):
    cfg = C.from_dict({"simulation": {"T": 15}})
    a, b = simulate_config(cfg), simulate_config(cfg)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.measurements, b.measurements)
    write_truth(tmp_path / "t.csv", a.states)
    write_measurements(tmp_path / "m.csv", a.measurements)
    assert np.array_equal(read_truth(tmp_path / "t.csv"), a.states)
    ys = read_measurements(tmp_path / "m.csv")
    assert np.array_equal(ys, a.measurements)
    model, fcfg = cfg.model_spec(), cfg.filter_config()
    assert np.array_equal(run(model, fcfg, ys).estimates, run(model, fcfg, a.measurements).estimates)


def test_read_rejects_gaps(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("step,y\n1,0.5\n3,0.2\n")
    with pytest.raises(ValueError):
        read_measurements(p)


# -- CLI --------------------------------------------------------------------


def test_cli_run_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, small_toml(out))
    assert main(["run", "--config", str(cfg)]) == 0
    printed = capsys.readouterr().out
    rows = read_rows(out / "estimates.csv")
    assert ",".join(rows[0]) == HEADER
    assert len(rows) == 1 + 12 and [int(r[0]) for r in rows[1:]] == list(range(1, 13))
    assert all(r[-1] == "" for r in rows[1:])
    assert all(1 <= int(r[7]) <= 12 for r in rows[1:])
    # RMSE recomputable from the CSV to the printed precision
    data = np.array([[float(c) for c in r[1:6]] for r in rows[1:]])
    recomputed = np.sqrt(np.mean((data[:, 3:5] - data[:, 0:2]) ** 2, axis=0))
    line = next(s for s in printed.splitlines() if s.startswith("rmse"))
    printed_vals = [float(t.split("=")[1]) for t in line.split()[1:]]
    assert [f"{v:.6f}" for v in recomputed] == [f"{v:.6f}" for v in printed_vals]


def test_cli_bit_identical(tmp_path):
    outs = []
    for tag in ("a", "b"):
        cfg = write_cfg(tmp_path, small_toml(tmp_path / tag), f"{tag}.toml")
        assert main(["run", "--config", str(cfg)]) == 0
        outs.append((tmp_path / tag / "estimates.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_timing_column(tmp_path):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, small_toml(out, T=3, extra="[filter]\nrecord_timing = true\n"))
    assert main(["run", "--config", str(cfg)]) == 0
    rows = read_rows(out / "estimates.csv")
    assert all(float(r[-1]) > 0 for r in rows[1:])


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_invalid_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[prune]\nmax_members = 0\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert capsys.readouterr().err


def test_cli_numeric_failure_reports_step(tmp_path, capsys):
    m = tmp_path / "m.csv"
    m.write_text("step,y\n1,0.1\n2,0.2\n3,nan\n4,0.1\n")
    cfg = write_cfg(tmp_path, f'[io]\nmeasurements = "{m}"\nout_dir = "{tmp_path / "o"}"\n')
    assert main(["run", "--config", str(cfg)]) == 2
    assert "step 3" in capsys.readouterr().err


def test_cli_measurement_file_without_truth(tmp_path, capsys):
    m = tmp_path / "m.csv"
    write_measurements(m, np.array([[0.1], [0.3], [0.2]]))
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, f'[io]\nmeasurements = "{m}"\nout_dir = "{out}"\n')
    assert main(["run", "--config", str(cfg)]) == 0
    rows = read_rows(out / "estimates.csv")
    assert len(rows) == 4 and rows[1][1] == "" and "rmse" not in capsys.readouterr().out


def test_cli_simulate_then_run_from_files(tmp_path):
    out = tmp_path / "sim"
    cfg = write_cfg(tmp_path, small_toml(out))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "gen")]) == 0
    extra = f'measurements = "{out / "measurements.csv"}"\ntruth = "{out / "truth.csv"}"\n'
    cfg2 = write_cfg(tmp_path, small_toml(tmp_path / "file", extra=extra), "file.toml")
    assert main(["run", "--config", str(cfg2)]) == 0
    a = (tmp_path / "gen" / "estimates.csv").read_bytes()
    b = (tmp_path / "file" / "estimates.csv").read_bytes()
    assert a == b


def test_cli_seed_override(tmp_path):
    cfg = write_cfg(tmp_path, small_toml(tmp_path / "x"))
    main(["simulate", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "s1")])
    main(["simulate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "s2")])
    assert (tmp_path / "s1" / "measurements.csv").read_bytes() != (tmp_path / "s2" / "measurements.csv").read_bytes()


def test_cli_grid_oracle(tmp_path):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, small_toml(out, T=5, extra="[oracle]\npoints = 41\nw_points = 21\n"))
    assert main(["run", "--config", str(cfg), "--oracle", "grid"]) == 0
    rows = read_rows(out / "dp_compare.csv")
    assert rows[0] == ["step", "x1_oracle", "x2_oracle", "x1_hat", "x2_hat", "gap"]
    assert len(rows) == 6
    for r in rows[1:]:
        ref, est = np.array(r[1:3], float), np.array(r[3:5], float)
        assert float(r[5]) == pytest.approx(np.linalg.norm(ref - est))


def test_cli_riccati_oracle(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(CONFIGS / "linear.toml"), "--oracle", "riccati", "--out", str(out)]) == 0
    gaps = [float(r[-1]) for r in read_rows(out / "dp_compare.csv")[1:]]
    assert max(gaps) <= 1e-6


def test_cli_riccati_rejects_cubic(tmp_path):
    cfg = write_cfg(tmp_path, small_toml(tmp_path / "o", T=3))
    assert main(["run", "--config", str(cfg), "--oracle", "riccati"]) == 1


def test_oracle_check_passes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small_toml(tmp_path / "o", T=1, extra="[oracle]\nw_points = 20001\n"))
    assert main(["oracle-check", "--config", str(cfg)]) == 0
    assert "oracle check passed" in capsys.readouterr().out


def test_rmse_helper():
    est = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 2.0]])
    truth = np.zeros((3, 2))
    np.testing.assert_allclose(rmse(est, truth), [math.sqrt(5), 2.0])


# -- pruning comparison -----------------------------------------------------


def test_compare_no_pressure_identical(tmp_path):
    cfg = C.from_dict({"simulation": {"T": 3}, "prune": {"max_members": 100000}, "compare": {"seeds": [1, 2]}})
    rep = compare_pruning(cfg)
    for _, _, _, ec, ev in rep["rows"]:
        assert ec == ev


def test_compare_no_jump_similar_rmse():
    cfg = C.from_dict({"simulation": {"T": 40}, "compare": {"seeds": [1, 2, 3]}})
    rep = compare_pruning(cfg)
    c, v = np.mean(rep["rmse"]["cluster"]), np.mean(rep["rmse"]["value"])
    assert max(c, v) <= 2 * min(c, v)
    assert rep["recovery"]["cluster"] == [None, None, None]


def test_cli_compare_outputs(tmp_path):
    out = tmp_path / "o"
    extra = "[compare]\nseeds = [3, 4]\n"
    text = small_toml(out, T=10, extra=extra).replace("seed = 7", "seed = 7\njump_step = 5\njump = [0.0, 6.0]")
    cfg = write_cfg(tmp_path, text)
    assert main(["compare-pruning", "--config", str(cfg)]) == 0
    rows = read_rows(out / "pruning_report.csv")
    assert rows[0] == ["seed", "step", "x2_true", "err_cluster", "err_value"] and len(rows) == 1 + 2 * 10
    rec = read_rows(out / "pruning_recovery.csv")
    assert len(rec) == 3


def test_oracle_check_function_report():
    cfg = C.from_dict({"simulation": {"T": 1}})
    r = oracle_check(cfg, samples=50, w_points=20001)
    assert r["points"] == 50 and r["members"] > 1
    assert r["max_dev"] <= r["bound"] + 1e-12
