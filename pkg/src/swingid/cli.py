"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure, 3 file-system error.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import histogram_edges, relative_errors, run_monte_carlo
from .config import ExperimentConfig, bundled_scenarios, load_config
from .dynamics import Trajectory
from .errors import DimensionMismatch, InputError, NumericalError, SwingIdError
from .estimators import METHODS, estimate

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
DEFAULT_GRID = (50, 100, 200, 400)
CLI_METHODS = ("unconstrained", "constrained", "per-node", "naive", "all")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_text(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------- trajectories


def trajectory_csv(traj: Trajectory, fingerprint: str) -> str:
    """CSV text: ``#`` metadata lines, a header row, then one row per sample."""
    n = traj.size
    buf = io.StringIO()
    buf.write(f"# config_fingerprint: {fingerprint}\n")
    buf.write(f"# seed: {traj.seed}\n")
    buf.write(f"# ts: {_fmt(traj.ts)}\n")
    header = ["k"] + [f"delta_{i}" for i in range(1, n + 1)] + [f"omega_{i}" for i in range(1, n + 1)]
    buf.write(",".join(header) + "\n")
    for k in range(traj.steps):
        values = [_fmt(v) for v in traj.delta[k]] + [_fmt(v) for v in traj.omega[k]]
        buf.write(f"{k}," + ",".join(values) + "\n")
    return buf.getvalue()


def read_trajectory(path) -> Trajectory:
    """Load a trajectory written by ``swingid simulate``.

    The noise sequence is not stored in the file; it is returned as NaN.
    """
    meta = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    if header is None or "ts" not in meta:
        raise InputError(f"{path}: not a trajectory file (missing header or ts)")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    n = (len(header) - 1) // 2
    if len(header) != 2 * n + 1 or data.shape[0] < 2:
        raise DimensionMismatch(f"{path}: expected k plus 2N columns and at least two rows")
    seed = meta.get("seed")
    return Trajectory(
        delta=data[:, 1 : n + 1],
        omega=data[:, n + 1 :],
        noise=np.full((data.shape[0] - 1, n), np.nan),
        ts=float(meta["ts"]),
        seed=int(seed) if seed not in (None, "None") else None,
    )


# ---------------------------------------------------------------- commands


def _with_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    return config.replace(**changes) if changes else config


def cmd_simulate(args) -> int:
    config = _with_overrides(load_config(args.config), args)
    traj = config.simulate()
    _write_text(args.out, trajectory_csv(traj, config.fingerprint))
    if args.out not in (None, "-"):
        meta = {
            "config": config.source,
            "config_fingerprint": config.fingerprint,
            "seed": config.seed,
            "ts": config.ts,
            "steps": traj.steps,
            "nodes": traj.size,
        }
        _write_text(Path(args.out).with_suffix(".meta.json"), _dump_json(meta))
    return EXIT_OK


def _result_record(result, config: ExperimentConfig) -> dict:
    record = result.to_dict()
    rel = relative_errors(result, config.params, skip_zero=True)
    record["relative_errors"] = [None if np.isnan(v) else float(v) for v in rel]
    return record


def comparison_table(config: ExperimentConfig, results: dict) -> str:
    """Per-generator inertia estimates with relative errors, one column per method."""
    methods = list(results)
    lines = []
    head = f"{'node':>4}  {'m*':>8}" + "".join(f"  {m:>24}" for m in methods)
    lines.append(head)
    lines.append("-" * len(head))
    for i, m_true in enumerate(config.params.m):
        cells = []
        for name in methods:
            res = results[name]
            if isinstance(res, Exception):
                cells.append(f"{'failed: ' + type(res).__name__:>24}")
                continue
            est = res.m_hat[i]
            rel = "n/a" if m_true == 0 else f"{(est - m_true) / m_true:.4g}"
            cells.append(f"{f'{est:.4f} ({rel})':>24}")
        lines.append(f"{i + 1:>4}  {m_true:>8.4f}" + "".join(f"  {c}" for c in cells))
    return "\n".join(lines) + "\n"


def cmd_estimate(args) -> int:
    config = _with_overrides(load_config(args.config), args)
    traj = read_trajectory(args.trajectory) if args.trajectory else config.simulate()
    if traj.size != config.size:
        raise DimensionMismatch(f"trajectory has {traj.size} nodes, config has {config.size}")
    method = (args.method or config.estimator.method).replace("-", "_")
    spec = config.estimator
    out = {
        "config_fingerprint": config.fingerprint,
        "seed": traj.seed,
        "T": traj.steps,
        "ts": traj.ts,
        "method": method,
    }
    if method == "all":
        results = {}
        for name in METHODS:
            try:
                results[name] = estimate(traj, config.laplacian, name, spec.droop_set, spec.d_max)
            except NumericalError as exc:
                results[name] = exc
        out["results"] = {
            name: {"error": type(r).__name__, "message": str(r)} if isinstance(r, Exception) else _result_record(r, config)
            for name, r in results.items()
        }
        # Keep stdout clean for the JSON record when it goes there.
        table_stream = sys.stderr if args.out in (None, "-") else sys.stdout
        table_stream.write(comparison_table(config, results))
    else:
        result = estimate(traj, config.laplacian, method, spec.droop_set, spec.d_max)
        out["results"] = {method: _result_record(result, config)}
    _write_text(args.out, _dump_json(out))
    return EXIT_OK


def _parse_grid(text: str) -> list[int]:
    try:
        grid = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise InputError(f"--grid must be comma-separated integers, got {text!r}") from None
    if not grid:
        raise InputError("--grid is empty")
    return grid


def cmd_montecarlo(args) -> int:
    config = load_config(args.config)
    grid = _parse_grid(args.grid) if args.grid else list(DEFAULT_GRID)
    master_seed = config.seed if args.seed is None else args.seed
    method = args.method.replace("-", "_") if args.method else None
    report = run_monte_carlo(config, grid, args.trials, master_seed, method=method, workers=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    banner = f"# config_fingerprint: {report.config_fingerprint}\n# master_seed: {report.master_seed}\n# method: {report.method}\n"

    lines = [banner + "T,e_int_mean,e_int_std,d_int_mean,d_int_std,trials,failures\n"]
    for g, t in enumerate(report.horizon_grid):
        stats = (report.e_int_mean[g], report.e_int_std[g], report.d_int_mean[g], report.d_int_std[g])
        lines.append(f"{t}," + ",".join(_fmt(v) for v in stats) + f",{report.trials},{report.failures[g]}\n")
    (out / "summary.csv").write_text("".join(lines))

    lines = [banner + "T,trial,node,m_error,d_error\n"]
    edges = [banner + "T,node,quantity,edges\n"]
    for g, t in enumerate(report.horizon_grid):
        for trial in range(report.trials):
            for node in range(config.size):
                me, de = report.m_errors[g, trial, node], report.d_errors[g, trial, node]
                lines.append(f"{t},{trial},{node + 1},{_fmt(me)},{_fmt(de)}\n")
        for node in range(config.size):
            for name, arr in (("m_error", report.m_errors), ("d_error", report.d_errors)):
                e = histogram_edges(arr[g, :, node])
                edges.append(f"{t},{node + 1},{name}," + " ".join(_fmt(v) for v in e) + "\n")
    (out / "node_errors.csv").write_text("".join(lines))
    (out / "histogram_edges.csv").write_text("".join(edges))
    if report.failures.any():
        sys.stderr.write(f"warning: failed trials per horizon: {dict(zip(report.horizon_grid, report.failures.tolist()))}\n")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name in bundled_scenarios():
        config = load_config(name)
        print(f"{name:<16} N={config.size:<3} T={config.horizon:<5} method={config.estimator.method:<14} {config.source}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swingid", description="Swing-dynamics simulation and inertia/damping estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a trajectory and write it as CSV")
    p.add_argument("--config", required=True, help="config file or bundled scenario name")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--horizon", type=int, help="override the number of samples")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate inertia and damping")
    p.add_argument("--config", required=True, help="config file or bundled scenario name")
    p.add_argument("--trajectory", help="trajectory CSV from 'simulate' (default: simulate from the config)")
    p.add_argument("--method", choices=CLI_METHODS, help="estimator (default: from the config)")
    p.add_argument("--out", help="output JSON (default: stdout)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--horizon", type=int, help="override the number of samples")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("montecarlo", help="Monte Carlo error statistics over a horizon grid")
    p.add_argument("--config", required=True, help="config file or bundled scenario name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid", help="comma-separated horizons (default: 50,100,200,400)")
    p.add_argument("--trials", type=int, default=100, help="trials per horizon (default: 100)")
    p.add_argument("--seed", type=int, help="master seed (default: the config seed)")
    p.add_argument("--method", choices=CLI_METHODS, help="estimator (default: from the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("scenarios", help="list bundled scenarios")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except NumericalError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except SwingIdError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
