"""Command-line entry point: train, run, compare, sweep, bounds."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import MODES, ConfigError, RunConfig, load_config
from .edmd import KoopmanModel
from .harness import (METRIC_FIELDS, RunAborted, compute_metrics, resolve_model, run_closed_loop, train_model,
                      training_dataset, write_metrics)
from .triggers import theoretic_bounds

_BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

SWEEP_H0 = (5.0, 8.0)
SWEEP_V0 = (1.0, 0.0, -1.0)

# rows of the comparison table: (label, metric key, format)
TABLE_ROWS = (
    ("Iterations", "iterations", "{:d}"),
    ("Avg. computation time (ms)", "avg_compute_time_s", "{:.3f}"),
    ("Control effort", "control_effort", "{:.2f}"),
    ("RMSE last 4 s", "rmse_last4s", "{:.4f}"),
    ("Terminal time (s)", "terminal_time", "{:.2f}"),
    ("Terminal velocity (m/s)", "terminal_velocity", "{:.3f}"),
    ("Adaptation events", "adaptation_events", "{:d}"),
    ("Control events", "control_events", "{:d}"),
    ("Events avoided", "events_avoided", "{:d}"),
)


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "mode", None):
        changes["mode"] = args.mode.upper()
    if args.model is not None and args.command != "train":
        changes["model__source"] = str(args.model)
    return cfg.replace(**changes) if changes else cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_one(config: RunConfig, model: KoopmanModel):
    """Worker for concurrent runs: returns (metrics or None, error message or None)."""
    try:
        result = run_closed_loop(config, model)
    except RunAborted as exc:
        return None, str(exc)
    return compute_metrics(result), None


def _map_runs(configs, model, jobs: int):
    if jobs <= 1 or len(configs) == 1:
        return [_run_one(c, model) for c in configs]
    # fresh interpreters with single-threaded BLAS, so concurrent runs do not oversubscribe cores
    saved = {k: os.environ.get(k) for k in _BLAS_THREAD_VARS}
    os.environ.update({k: "1" for k in _BLAS_THREAD_VARS})
    try:
        with ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("spawn")) as pool:
            return list(pool.map(_run_one, configs, [model] * len(configs)))
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    data = training_dataset(cfg)
    model = train_model(cfg, data)
    model_path = Path(args.model) if args.model else out / "model.json"
    model.save(model_path)
    data.to_csv(out / "dataset.csv")
    print(f"trained q={model.q} m={model.m} on {len(data)} samples "
          f"({data.truncated} truncated trajectories) -> {model_path}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    model = resolve_model(cfg)
    try:
        result = run_closed_loop(cfg, model)
    except RunAborted as exc:
        if exc.result is not None and exc.result.rows:
            exc.result.to_csv(out / "trajectory.csv")
        print(f"error: run aborted: {exc}", file=sys.stderr)
        return 1
    metrics = compute_metrics(result)
    result.to_csv(out / "trajectory.csv")
    result.events.to_csv(out / "events.csv")
    write_metrics(metrics, out / "metrics.json")
    for key in METRIC_FIELDS:
        print(f"{key}: {metrics[key]}")
    return 0


def format_table(results: dict) -> str:
    modes = list(results)
    width = max(len(r[0]) for r in TABLE_ROWS) + 2
    lines = ["".ljust(width) + "".join(m.rjust(12) for m in modes)]
    for label, key, fmt in TABLE_ROWS:
        cells = []
        for m in modes:
            metrics, err = results[m]
            if metrics is None:
                cells.append("aborted".rjust(12))
                continue
            value = metrics[key] * 1e3 if key == "avg_compute_time_s" else metrics[key]
            cells.append(fmt.format(value).rjust(12))
        lines.append(label.ljust(width) + "".join(cells))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    model = resolve_model(cfg)
    configs = [cfg.replace(mode=m) for m in MODES]
    outcomes = dict(zip(MODES, _map_runs(configs, model, args.jobs)))
    print(format_table(outcomes))
    summary = {m: (metrics if metrics is not None else {"error": err}) for m, (metrics, err) in outcomes.items()}
    with open(out / "compare.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    failed = [m for m, (metrics, _) in outcomes.items() if metrics is None]
    for m in failed:
        print(f"error: {m} run aborted: {outcomes[m][1]}", file=sys.stderr)
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    model = resolve_model(cfg)
    grid = [(h0, v0) for h0 in SWEEP_H0 for v0 in SWEEP_V0]
    configs = [cfg.replace(h0=h0, v0=v0) for h0, v0 in grid]
    outcomes = _map_runs(configs, model, args.jobs)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("h0", "v0", "error") + METRIC_FIELDS)
        for (h0, v0), (metrics, err) in zip(grid, outcomes):
            w.writerow([h0, v0, err or ""] + [metrics[k] if metrics else "" for k in METRIC_FIELDS])
    failed = 0
    for (h0, v0), (metrics, err) in zip(grid, outcomes):
        if metrics is None:
            failed += 1
            print(f"h0={h0:g} v0={v0:+g}  aborted: {err}")
        else:
            print(f"h0={h0:g} v0={v0:+g}  T={metrics['terminal_time']:.2f}s  v_T={metrics['terminal_velocity']:+.3f}"
                  f"  rmse={metrics['rmse_last4s']:.4f}  events={metrics['total_events']}")
    return 1 if failed else 0


def cmd_bounds(args) -> int:
    cfg = _load(args)
    model = resolve_model(cfg)
    b = theoretic_bounds(cfg.trigger_params(model.q), model, (cfg.mpc.x_min, cfg.mpc.x_max),
                         (cfg.mpc.u_min, cfg.mpc.u_max))
    print(f"prediction error bound: {b.prediction_bound:.6g}")
    print(f"tracking error bound:   {b.tracking_bound:.6g}")
    print(f"min inter-event steps:  {b.zeno_steps:.6g}")
    print(f"  z_max={b.z_max:.6g} L_v={b.lipschitz:.6g} M_bar={b.m_bar:.6g}")
    return 0


COMMANDS = {"train": cmd_train, "run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "bounds": cmd_bounds}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etac", description="Event-triggered adaptive Koopman landing control.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log adaptation warnings")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "generate nominal data, fit EDMD and save the model JSON",
        "run": "single closed-loop run; writes trajectory.csv, events.csv and metrics.json",
        "compare": "ETAC vs TTAC vs ETC on a shared seed",
        "sweep": "ETAC over h0 in {5, 8} and v0 in {1, 0, -1}",
        "bounds": "print the analytic error bounds and the Zeno-free step bound",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--model", type=Path, help="model JSON (output path for train, input otherwise)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
        if name in ("run", "sweep", "bounds"):
            p.add_argument("--mode", choices=[m.lower() for m in MODES], help="override run.mode")
        if name in ("compare", "sweep"):
            p.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ArithmeticError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
