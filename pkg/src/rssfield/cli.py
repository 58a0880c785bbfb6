"""Command-line experiment runner.

Subcommands: synth, fit-static, fit-recursive, bound, baseline-okd, cases,
eval, ingest-real. Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O or data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .baseline import okd_predict
from .bounds import hcrb_all
from .model import MeasurementSnapshot, NumericalError
from .pipeline import run_static
from .recursive import RecursiveConfig, init_state, rgp_step
from .synth import sample_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _load(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "lam", None) is not None:
        cfg.lam = args.lam
    if getattr(args, "steps", None) is not None:
        cfg.steps = args.steps
    if getattr(args, "replicates", None) is not None:
        cfg.replicates = args.replicates
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot_at(rows, t):
    sel = [r for r in rows if r[0] == t]
    return MeasurementSnapshot(
        t=t,
        sensor_ids=tuple(f"{r[1]}#{i}" for i, r in enumerate(sel)),
        positions=np.array([(r[2], r[3]) for r in sel]).reshape(-1, 2),
        rss=np.array([r[4] for r in sel]),
    )


def _train_inputs(args, cfg):
    """(snapshots by t, grid, truth-or-None) from files or the synthetic world."""
    if args.measurements:
        rows = ex.read_measurements(args.measurements)
        times = sorted({r[0] for r in rows})
        snaps = [_snapshot_at(rows, t) for t in times]
        if args.truth:
            grid, truth = ex.read_truth(args.truth)
        else:
            grid, truth = cfg.grid(), None
        return snaps, grid, truth
    scenario = cfg.scenario()
    snaps, truths = [], []
    for t in range(cfg.steps):
        sn, tr = sample_snapshot(scenario, t)
        snaps.append(sn)
        truths.append(tr.grid_field)
    return snaps, scenario.grid, np.array(truths)


def cmd_synth(args):
    cfg = _load(args)
    out = _outdir(cfg)
    scenario = cfg.scenario()
    rows = []
    for t in range(cfg.steps):
        snap, truth = sample_snapshot(scenario, t)
        for sid, (x, y), rss in zip(snap.sensor_ids, snap.positions, snap.rss):
            rows.append((t, str(sid), x, y, rss))
        ex.write_truth(out / f"truth_t{t}.csv", scenario.grid, truth.grid_field)
    ex.write_measurements(out / "measurements.csv", rows)
    print(f"wrote {out / 'measurements.csv'} ({len(rows)} rows) and {cfg.steps} truth file(s)")
    return EXIT_OK


def cmd_fit_static(args, *, with_bounds=False):
    cfg = _load(args)
    out = _outdir(cfg)
    snaps, grid, truth = _train_inputs(args, cfg)
    snap = snaps[0]
    result = run_static(snap, grid, cfg.pipeline_config_for(snap))
    bounds = None
    if with_bounds:
        bounds = hcrb_all(
            (snap.positions, snap.rss), grid, result.hyper, result.kernel, cfg.noise_model()
        )
    path = out / ("field_bound.csv" if with_bounds else "field_static.csv")
    ex.emit_field(result.posterior, bounds, path, grid)
    print(f"wrote {path}")
    _report_fit(result, truth, 0)
    return EXIT_OK


def _report_fit(result, truth, t):
    hyper = result.hyper
    print(f"t={t} mu_alpha={hyper.mu_alpha:.4f} mu_p={hyper.mu_p:.4f} tx=({hyper.tx.x:.2f},{hyper.tx.y:.2f})")
    if truth is not None:
        vec = truth[t] if isinstance(truth, np.ndarray) and truth.ndim == 2 else truth
        print(f"t={t} mse={ex.compute_mse(result.posterior.mean, vec):.6g}")


def cmd_fit_recursive(args):
    cfg = _load(args)
    out = _outdir(cfg)
    snaps, grid, truth = _train_inputs(args, cfg)
    rcfg = RecursiveConfig(
        pipeline=cfg.pipeline_config_for(snaps[0]),
        lam=cfg.lam,
        kernel_refit=cfg.kernel_refit,
    )
    state = init_state(snaps[0], grid, rcfg)
    mses = []
    for i, snap in enumerate(snaps):
        if i > 0:
            state = rgp_step(state, snap, grid, rcfg)
        ex.emit_field(state.posterior, None, out / f"field_rgp_t{snap.t}.csv", grid)
        if truth is not None:
            vec = truth[i] if isinstance(truth, np.ndarray) and truth.ndim == 2 else truth
            mses.append((snap.t, ex.compute_mse(state.posterior.mean, vec)))
    for t, mse in mses:
        print(f"t={t} mse={mse:.6g}")
    print(f"wrote {len(snaps)} field file(s) to {out}")
    return EXIT_OK


def cmd_baseline_okd(args):
    cfg = _load(args)
    out = _outdir(cfg)
    snaps, grid, truth = _train_inputs(args, cfg)
    snap = snaps[0]
    result = run_static(snap, grid, cfg.pipeline_config_for(snap), compute_cov=False)
    pred, var = okd_predict(
        (snap.positions, snap.rss), grid, result.hyper, return_variance=True
    )
    path = out / "field_okd.csv"
    ex.write_field_csv(path, grid, pred, var)
    print(f"wrote {path}")
    if truth is not None:
        vec = truth[0] if isinstance(truth, np.ndarray) and truth.ndim == 2 else truth
        print(f"t=0 mse={ex.compute_mse(pred, vec):.6g}")
    return EXIT_OK


def cmd_cases(args):
    cfg = _load(args)
    records, path = ex.run_cases(cfg)
    print(f"wrote {path}")
    for case, sv, n, mean in ex._summarize(records):
        print(f"{case} sigma_v_sq={sv:g} n={n} mean_mse={mean:.4f}")
    return EXIT_OK


def cmd_eval(args):
    grid_f, mean, _, _ = ex.read_field_csv(args.field)
    grid_t, truth = ex.read_truth(args.truth)
    if grid_f.n_nodes != grid_t.n_nodes or not np.allclose(grid_f.xy, grid_t.xy, atol=1e-9):
        raise ex.DataError("field and truth files describe different grids")
    print(f"mse={ex.compute_mse(mean, truth):.17g}")
    return EXIT_OK


def cmd_ingest_real(args):
    cfg = _load(args)
    out = _outdir(cfg)
    train_rows, _, test_grid, test_rss = ex.ingest_real(args.measurements, cfg.seed)
    ex.write_measurements(out / "train_measurements.csv", [(0, r[1], r[2], r[3], r[4]) for r in train_rows])
    ex.write_truth(out / "test_truth.csv", test_grid, test_rss)
    print(
        f"split {len(train_rows)}/{test_grid.n_nodes} rows into "
        f"{out / 'train_measurements.csv'} and {out / 'test_truth.csv'}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rssfield", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, measurements=False):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--seed", type=int, help="override run seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--lambda", dest="lam", type=float, help="forgetting factor")
        p.add_argument("--steps", type=int, help="number of time steps")
        p.add_argument("--replicates", type=int, help="number of replicates")
        if measurements:
            p.add_argument("--measurements", help="measurement CSV (else synthetic)")
            p.add_argument("--truth", help="truth CSV (grid + reference RSS)")

    common(sub.add_parser("synth", help="generate synthetic measurement/truth files"))
    common(sub.add_parser("fit-static", help="one-snapshot GP field estimate"), measurements=True)
    common(sub.add_parser("fit-recursive", help="recursive GP over all time steps"), measurements=True)
    common(sub.add_parser("bound", help="static fit plus per-node error bounds"), measurements=True)
    common(sub.add_parser("baseline-okd", help="ordinary-kriging baseline"), measurements=True)
    common(sub.add_parser("cases", help="location-error case sweep"))
    p_eval = sub.add_parser("eval", help="MSE of a field file against a truth file")
    p_eval.add_argument("--field", required=True)
    p_eval.add_argument("--truth", required=True)
    p_ing = sub.add_parser("ingest-real", help="split a measurement CSV into train/test")
    p_ing.add_argument("--measurements", required=True)
    common(p_ing)
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "fit-static": cmd_fit_static,
    "fit-recursive": cmd_fit_recursive,
    "bound": lambda args: cmd_fit_static(args, with_bounds=True),
    "baseline-okd": cmd_baseline_okd,
    "cases": cmd_cases,
    "eval": cmd_eval,
    "ingest-real": cmd_ingest_real,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ex.DataError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
