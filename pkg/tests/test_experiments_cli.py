import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import rssfield as rf
from rssfield import cli
from rssfield.empbayes import HyperEstimate
from rssfield.experiments import (
    ConfigError,
    DataError,
    ExperimentConfig,
    compute_mse,
    emit_field,
    ingest_real,
    parse_config,
    read_field_csv,
    read_measurements,
    read_truth,
    run_cases,
    write_field_csv,
    write_measurements,
)
from rssfield.gp import FieldPosterior, KernelParams
from rssfield.model import Position, uniform_grid


def test_compute_mse_identical_and_offset():
    v = np.array([-60.0, -70.0, -80.0])
    assert compute_mse(v, v) == 0.0
    assert_allclose(compute_mse(v + 3.0, v), 9.0, rtol=1e-12)


def test_compute_mse_matches_loop_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=7), rng.normal(size=7)
    acc = 0.0
    for x, y in zip(a, b):
        acc += (x - y) ** 2
    assert_allclose(compute_mse(a, b), acc / 7, rtol=1e-12)


def test_compute_mse_length_mismatch():
    with pytest.raises(ValueError):
        compute_mse(np.zeros(3), np.zeros(4))


def test_parse_config_defaults_and_overrides():
    cfg = parse_config("""
[scenario]
area_width = 300
area_height = 250
n_sensors = 50
sigma_v = 2.0
dynamics = moving
step_std = 4.0
[estimator]
estimator = rgp
lambda = 0.7
steps = 5
[run]
replicates = 3
seed = 42
sigma_v_sq_sweep = 4, 9
""")
    assert cfg.area == (300.0, 250.0)
    assert cfg.n_sensors == 50
    assert cfg.estimator == "rgp"
    assert cfg.lam == 0.7
    assert cfg.steps == 5
    assert cfg.replicates == 3
    assert cfg.seed == 42
    assert cfg.sigma_v_sq_sweep == (4.0, 9.0)
    assert isinstance(cfg.dynamics_obj(), rf.Moving)
    # defaults follow the reference setup
    default = parse_config("")
    assert default.grid().n_nodes == 1088
    assert default.n_sensors == 218
    assert_allclose(default.effective_rho_u(), 200.0, atol=0.1)


def test_parse_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nwidth = 10\n")
    with pytest.raises(ConfigError):
        parse_config("[estimator]\nestimator = magic\n")
    with pytest.raises(ConfigError):
        parse_config("[run]\nreplicates = 0\n")
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nalpha = much\n")


def test_power_schedule_config_round_trip():
    cfg = parse_config("""
[scenario]
dynamics = power_schedule
power_schedule = 0:-10, 5:-5
""")
    dyn = cfg.dynamics_obj()
    assert dyn.schedule == ((0, -10.0), (5, -5.0))


def test_field_csv_round_trip(tmp_path):
    grid = uniform_grid(100, 100, 4, 4)
    rng = np.random.default_rng(1)
    mean = rng.normal(-70, 5, 16)
    var = rng.uniform(0.1, 4, 16)
    path = tmp_path / "field.csv"
    write_field_csv(path, grid, mean, var)
    grid2, mean2, var2, hcrb = read_field_csv(path)
    assert hcrb is None
    assert_allclose(grid2.xy, grid.xy, atol=1e-12)
    assert_allclose(mean2, mean, atol=1e-12)
    assert_allclose(var2, var, atol=1e-12)


def test_emit_field_includes_bounds_column_iff_supplied(tmp_path):
    grid = uniform_grid(50, 50, 2, 2)
    hyper = HyperEstimate(mu_p=-10, mu_alpha=2.5, var_p=0.0, var_alpha=0.0, tx=Position(25, 25))
    kernel = KernelParams.from_decay(1.0, 40.0)
    post = FieldPosterior(t=0, mean=np.full(4, -60.0), cov=np.eye(4), hyper=hyper, kernel=kernel)
    p1 = tmp_path / "plain.csv"
    emit_field(post, None, p1, grid)
    assert "hcrb_db2" not in p1.read_text().splitlines()[0]
    reports = [rf.HcrbReport(node_index=i, gp_variance=1.0, added_term=0.5, bound=1.5) for i in range(4)]
    p2 = tmp_path / "with_bounds.csv"
    emit_field(post, reports, p2, grid)
    _, _, var, hcrb = read_field_csv(p2)
    assert_allclose(var, 1.0)
    assert_allclose(hcrb, 1.5)


def test_emit_field_reference_grid_row_count(tmp_path):
    grid = uniform_grid(500, 500, 32, 34)
    hyper = HyperEstimate(mu_p=-10, mu_alpha=3.5, var_p=0.0, var_alpha=0.0, tx=Position(250, 250))
    kernel = KernelParams.from_decay(1.0, 50.0)
    post = FieldPosterior(
        t=0, mean=np.full(1088, -70.0), cov=np.eye(1088), hyper=hyper, kernel=kernel
    )
    path = tmp_path / "field.csv"
    emit_field(post, None, path, grid)
    lines = path.read_text().splitlines()
    assert len(lines) == 1089  # header + one row per node


def test_measurements_round_trip_and_validation(tmp_path):
    rows = [(0, "a", 1.5, 2.5, -61.0), (1, "b", 3.0, 4.0, -72.5)]
    path = tmp_path / "meas.csv"
    write_measurements(path, rows)
    back = read_measurements(path)
    assert back == [(0, "a", 1.5, 2.5, -61.0), (1, "b", 3.0, 4.0, -72.5)]

    bad = tmp_path / "bad.csv"
    bad.write_text("t,sensor_id,x_hat_m,y_hat_m,rss_dbm\n0,a,1.0,2.0,not_a_number\n")
    with pytest.raises(DataError, match="row 2"):
        read_measurements(bad)
    header = tmp_path / "header.csv"
    header.write_text("a,b,c\n")
    with pytest.raises(DataError, match="header"):
        read_measurements(header)


def test_ingest_real_split_sizes(tmp_path):
    rng = np.random.default_rng(2)
    rows = [(0, str(i), *rng.uniform(0, 100, 2), float(rng.uniform(-90, -50))) for i in range(6437)]
    path = tmp_path / "real.csv"
    write_measurements(path, rows)
    train_rows, train_snap, test_grid, test_rss = ingest_real(path, split_seed=7)
    assert len(train_rows) == 3218
    assert test_grid.n_nodes == 3219
    assert train_snap.n_sensors == 3218
    assert test_rss.shape == (3219,)


def test_ingest_real_two_rows_and_determinism(tmp_path):
    rows = [(0, "a", 1.0, 2.0, -60.0), (0, "b", 3.0, 4.0, -70.0)]
    path = tmp_path / "two.csv"
    write_measurements(path, rows)
    train1, _, grid1, rss1 = ingest_real(path, split_seed=3)
    train2, _, grid2, rss2 = ingest_real(path, split_seed=3)
    assert len(train1) == 1 and grid1.n_nodes == 1
    assert train1 == train2
    assert_allclose(grid1.xy, grid2.xy)
    assert_allclose(rss1, rss2)


def _tiny_cases_config(tmp_path, seed=0):
    cfg = ExperimentConfig()
    cfg.area = (300.0, 300.0)
    cfg.grid_nx = cfg.grid_ny = 5
    cfg.n_sensors = 40
    cfg.replicates = 2
    cfg.seed = seed
    cfg.sigma_v_sq_sweep = (10.0,)
    cfg.n_starts = 2
    cfg.refine_passes = 3
    cfg.nlml_maxiter = 60
    cfg.out_dir = str(tmp_path)
    return cfg


def test_run_cases_produces_paired_records(tmp_path):
    cfg = _tiny_cases_config(tmp_path)
    records, metrics_path = run_cases(cfg)
    assert len(records) == 2 * 1 * 3  # replicates x sweep x cases
    assert metrics_path.exists()
    cases = {r.case for r in records}
    assert cases == {"case1", "case2", "case3"}
    assert all(r.mse >= 0 for r in records)
    # summary means are recomputable from the per-replicate records
    text = (tmp_path / "cases_summary.csv").read_text()
    for case in sorted(cases):
        vals = [r.mse for r in records if r.case == case]
        assert f"{np.mean(vals):.17g}" in text


def test_run_cases_metrics_are_byte_identical_across_runs(tmp_path):
    cfg1 = _tiny_cases_config(tmp_path / "a")
    cfg2 = _tiny_cases_config(tmp_path / "b")
    _, p1 = run_cases(cfg1)
    _, p2 = run_cases(cfg2)
    assert p1.read_bytes() == p2.read_bytes()
    s1 = (tmp_path / "a" / "cases_summary.csv").read_bytes()
    s2 = (tmp_path / "b" / "cases_summary.csv").read_bytes()
    assert s1 == s2


def test_run_cases_noise_free_degenerate(tmp_path):
    cfg = _tiny_cases_config(tmp_path)
    cfg.sigma_v = 0.0
    cfg.sigma_w = 0.0
    cfg.sigma_d = 0.0
    cfg.rho_u = 0.0
    cfg.replicates = 1
    cfg.sigma_v_sq_sweep = (0.0,)
    records, _ = run_cases(cfg)
    for rec in records:
        assert rec.mse <= 1e-6


# ---------------------------------------------------------------------------
# command-line interface


def write_cfg(tmp_path, text):
    p = tmp_path / "exp.ini"
    p.write_text(text)
    return str(p)


SMALL_SCENARIO = """
[scenario]
area_width = 200
area_height = 200
grid_nx = 4
grid_ny = 4
n_sensors = 25
[estimator]
n_starts = 2
refine_passes = 3
nlml_maxiter = 60
[run]
seed = 1
"""


def test_cli_synth_then_fit_static_and_eval(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_SCENARIO)
    out = tmp_path / "out"
    assert cli.main(["synth", "--config", cfg, "--out", str(out), "--steps", "1"]) == 0
    assert (out / "measurements.csv").exists()
    assert (out / "truth_t0.csv").exists()

    rc = cli.main([
        "fit-static", "--config", cfg, "--out", str(out),
        "--measurements", str(out / "measurements.csv"), "--truth", str(out / "truth_t0.csv"),
    ])
    assert rc == 0
    assert (out / "field_static.csv").exists()

    rc = cli.main(["eval", "--field", str(out / "field_static.csv"), "--truth", str(out / "truth_t0.csv")])
    assert rc == 0
    out_text = capsys.readouterr().out
    assert "mse=" in out_text


def test_cli_bound_and_okd_and_recursive(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_SCENARIO)
    out = tmp_path / "out"
    assert cli.main(["synth", "--config", cfg, "--out", str(out), "--steps", "2"]) == 0
    meas = str(out / "measurements.csv")

    assert cli.main(["bound", "--config", cfg, "--out", str(out), "--measurements", meas]) == 0
    _, _, var, hcrb = read_field_csv(out / "field_bound.csv")
    assert hcrb is not None
    assert np.all(hcrb >= var - 1e-9)

    assert cli.main(["baseline-okd", "--config", cfg, "--out", str(out), "--measurements", meas]) == 0
    assert (out / "field_okd.csv").exists()

    assert cli.main(["fit-recursive", "--config", cfg, "--out", str(out), "--measurements", meas, "--lambda", "0.5"]) == 0
    assert (out / "field_rgp_t0.csv").exists()
    assert (out / "field_rgp_t1.csv").exists()


def test_cli_ingest_real(tmp_path):
    rng = np.random.default_rng(3)
    rows = [(0, str(i), *rng.uniform(0, 100, 2), float(rng.uniform(-90, -50))) for i in range(40)]
    raw = tmp_path / "raw.csv"
    write_measurements(raw, rows)
    out = tmp_path / "out"
    assert cli.main(["ingest-real", "--measurements", str(raw), "--seed", "5", "--out", str(out)]) == 0
    assert (out / "train_measurements.csv").exists()
    assert (out / "test_truth.csv").exists()
    assert len((out / "train_measurements.csv").read_text().splitlines()) == 21  # header + 20


def test_real_data_workflow_with_known_transmitter(tmp_path):
    # end-to-end: raw measurement file -> split -> fixed-transmitter fit on
    # the training half, scored on the held-out grid
    rng = np.random.default_rng(9)
    tx = Position(150.0, 150.0)
    n = 200
    pos = rng.uniform(0, 300, (n, 2))
    d = np.maximum(np.hypot(pos[:, 0] - tx.x, pos[:, 1] - tx.y), 1.0)
    rss = -10.0 - 35.0 * np.log10(d) + rng.normal(0, 2.0, n)
    raw = tmp_path / "raw.csv"
    write_measurements(raw, [(0, str(i), pos[i, 0], pos[i, 1], rss[i]) for i in range(n)])

    out = tmp_path / "out"
    assert cli.main(["ingest-real", "--measurements", str(raw), "--seed", "2", "--out", str(out)]) == 0

    cfg_text = """
[scenario]
area_width = 300
area_height = 300
tx_x = 150
tx_y = 150
tx_known = true
sigma_w = 2.0
[estimator]
n_starts = 2
refine_passes = 2
nlml_maxiter = 60
rho_u = 50
"""
    cfg = write_cfg(tmp_path, cfg_text)
    rc = cli.main([
        "fit-static", "--config", cfg, "--out", str(out),
        "--measurements", str(out / "train_measurements.csv"),
        "--truth", str(out / "test_truth.csv"),
    ])
    assert rc == 0
    grid, mean, _, _ = read_field_csv(out / "field_static.csv")
    _, truth = read_truth(out / "test_truth.csv")
    assert compute_mse(mean, truth) < 25.0  # clearly informative on held-out points


def test_pipeline_empirical_variance_path():
    cfg = ExperimentConfig()
    cfg.area = (300.0, 300.0)
    cfg.grid_nx = cfg.grid_ny = 4
    cfg.n_sensors = 40
    cfg.seed = 4
    cfg.variance_path = "empirical"
    cfg.n_starts = 2
    cfg.refine_passes = 3
    scenario = cfg.scenario()
    snap, _ = rf.sample_snapshot(scenario, 0)
    from rssfield.pipeline import run_static

    result = run_static(snap, scenario.grid, cfg.pipeline_config_for(snap))
    # the variance fields come from the residual fit, and the kernel freezes
    # them rather than re-learning
    assert result.hyper.var_p is not None and result.hyper.var_p >= 0.0
    assert_allclose(result.kernel.sigma_p_k, math.sqrt(result.hyper.var_p), rtol=1e-12)
    assert_allclose(result.kernel.sigma_alpha_k, math.sqrt(result.hyper.var_alpha), rtol=1e-12)


def test_cli_exit_codes(tmp_path):
    # config error
    bad_cfg = write_cfg(tmp_path, "[scenario]\nnot_a_key = 1\n")
    assert cli.main(["synth", "--config", bad_cfg, "--out", str(tmp_path / "x")]) == 2
    # I/O error: missing measurement file
    cfg = write_cfg(tmp_path, SMALL_SCENARIO)
    rc = cli.main(["fit-static", "--config", cfg, "--out", str(tmp_path / "y"),
                   "--measurements", str(tmp_path / "missing.csv")])
    assert rc == 4
    # I/O error: malformed truth file
    bad_truth = tmp_path / "bad_truth.csv"
    bad_truth.write_text("wrong,header\n")
    out = tmp_path / "out2"
    assert cli.main(["synth", "--config", cfg, "--out", str(out)]) == 0
    rc = cli.main(["eval", "--field", str(out / "truth_t0.csv"), "--truth", str(bad_truth)])
    assert rc == 4
