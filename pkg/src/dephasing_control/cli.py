"""Command-line front end.

Subcommands::

    dephasing-control run CONFIG [--out DIR] [--seed N] [--workers N]
    dephasing-control validate CONFIG
    dephasing-control noise-sample CONFIG [--count N] [--out DIR] [--seed N]
    dephasing-control version

Exit codes: 0 success, 1 numerical failure, 2 invalid configuration or
model, 3 infeasible pulse design. Nothing is written unless the whole run
succeeds. CSV files start with a single ``#`` comment line (tool version
and UTC timestamp); the rest is byte-identical across reruns with the same
configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .evolution import NumericalError
from .noise import ModelError, ensemble_statistics, sample_realization, validate_model
from .pulses import InfeasiblePulseError, ScheduleError
from .scenarios import ion_trap_protocol, rows_to_csv, run_ion_trap, run_sweep

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3


class _Failure(Exception):
    def __init__(self, code, messages):
        self.code = code
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


def _header(kind: str) -> str:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# dephasing-control {__version__} {kind} generated {stamp}\n"


def _load(args) -> RunConfig:
    path = args.config_opt or args.config
    if path is None:
        raise _Failure(EXIT_CONFIG, ["config: no configuration file given"])
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        raise _Failure(EXIT_CONFIG, exc.errors) from None
    seed = getattr(args, "seed", None)
    workers = getattr(args, "workers", None)
    if seed is not None:
        if seed < 0:
            raise _Failure(EXIT_CONFIG, ["--seed: must be nonnegative"])
        cfg.seed = seed
    if workers is not None:
        if workers < 1:
            raise _Failure(EXIT_CONFIG, ["--workers: must be at least 1"])
        cfg.workers = workers
    if getattr(args, "out", None):
        cfg.output = args.out
    if cfg.sweep is not None:
        cfg.sweep = replace(cfg.sweep, seed=cfg.seed, workers=cfg.workers)
    if cfg.ion_trap is not None:
        cfg.ion_trap = replace(cfg.ion_trap, seed=cfg.seed, workers=cfg.workers)
    return cfg


def _check(cfg: RunConfig) -> list:
    """All model and schedule checks, without simulating. Returns summary lines."""
    lines = []
    if cfg.noise is not None:
        report = validate_model(cfg.noise)
        if not report.valid:
            raise _Failure(EXIT_CONFIG, [f"noise: {v}" for v in report.violations])
        lines.append(f"noise: valid (min eigenvalue of xi {report.min_eigenvalue:.6g})")
    try:
        if cfg.sweep is not None:
            spec = cfg.sweep
            for value in spec.values:
                stage, model, sequence = spec.point(value)
                report = validate_model(model)
                if not report.valid:
                    raise _Failure(EXIT_CONFIG, [f"noise at {spec.parameter}={value}: {v}"
                                                 for v in report.violations])
                sched = stage.schedule()
                line = (f"schedule {stage.label}: duration {sched.duration:.6g}, "
                        f"peak {sched.peak:.6g}, {len(sched.fields)} fields")
                if line not in lines:
                    lines.append(line)
        if cfg.ion_trap is not None:
            segs = ion_trap_protocol(cfg.ion_trap)
            total = sum(s.duration for s in segs)
            lines.append(f"ion-trap {cfg.ion_trap.sequence}: {len(segs)} segments, duration {total:.6g}")
    except InfeasiblePulseError as exc:
        raise _Failure(EXIT_INFEASIBLE, [f"infeasible pulse design: {exc}"]) from None
    except (ScheduleError, ModelError) as exc:
        raise _Failure(EXIT_CONFIG, [f"schedule: {exc}"]) from None
    return lines


def _write_all(out_dir: Path, files: dict) -> None:
    """Write every file or none: stage into a temporary directory, then move."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".staging-") as tmp:
        for name, text in files.items():
            Path(tmp, name).write_text(text)
        for name in files:
            os.replace(Path(tmp, name), out_dir / name)


def _label(cfg: RunConfig) -> str:
    if cfg.ion_trap is not None:
        return f"ion_trap_{cfg.ion_trap.sequence}"
    spec = cfg.sweep
    if spec.parameter == "sequence" or spec.stage == "custom":
        return f"{spec.stage}_{spec.parameter}_sweep"
    return f"{spec.stage}_{str(spec.sequence).replace('-', '_')}_{spec.parameter}"


def cmd_run(args) -> int:
    cfg = _load(args)
    if cfg.kind is None:
        raise _Failure(EXIT_CONFIG, ["scenario.kind: missing"])
    _check(cfg)
    name = _label(cfg)
    try:
        if cfg.ion_trap is not None:
            report = run_ion_trap(cfg.ion_trap)
            files = {f"{name}.json": report.to_json() + "\n",
                     f"{name}.csv": _header("ion-trap") + report.to_csv()}
            print(f"{cfg.ion_trap.sequence}: F = {report.fidelity:.6f} +- {report.std_err:.2g} "
                  f"({report.n_realizations} realizations x {report.n_initial_states} states)")
        else:
            rows = run_sweep(cfg.sweep)
            files = {f"{name}.csv": _header("sweep") + rows_to_csv(rows)}
            for r in rows:
                print(f"{r['sweep_param']}={r['value']} seq={r['sequence']} {r['method']}: "
                      f"F = {r['fidelity']:.6f} +- {r['std_err']:.2g}")
    except InfeasiblePulseError as exc:
        raise _Failure(EXIT_INFEASIBLE, [f"infeasible pulse design: {exc}"]) from None
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise _Failure(EXIT_NUMERICAL, [f"numerical failure: {exc}"]) from None
    _write_all(Path(cfg.output), files)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    for line in _check(cfg):
        print(line)
    print("valid")
    return EXIT_OK


def cmd_noise_sample(args) -> int:
    cfg = _load(args)
    if args.count < 1:
        raise _Failure(EXIT_CONFIG, ["--count: must be at least 1"])
    model = cfg.noise
    report = validate_model(model)
    if not report.valid:
        raise _Failure(EXIT_CONFIG, [f"noise: {v}" for v in report.violations])
    duration = cfg.sampling.get("duration") or 50.0 * model.t_c
    dt = cfg.sampling.get("dt") or model.t_c / 20.0
    n = int(np.ceil(duration / dt - 1e-9))
    grid = np.linspace(0.0, n * dt, n + 1)
    lags = cfg.sampling.get("lags")
    files = {}
    for i in range(args.count):
        real = sample_realization(model, grid, cfg.seed, i)
        files[f"realization_{i:04d}.csv"] = real.csv_text()
    rows = ensemble_statistics(model, grid, cfg.seed, args.count, lags)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    files["summary.csv"] = _header("noise-summary") + buf.getvalue()
    _write_all(Path(cfg.output), files)
    var = [r for r in rows if r["stat"] == "covariance" and r["lag"] == 0.0 and r["j"] == r["k"]]
    for r in var:
        print(f"qubit {r['j']}: variance {r['sample']:.6g} +- {r['std_err']:.2g} (analytic {r['analytic']:.6g})")
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"dephasing-control {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dephasing-control",
                                     description="Dephasing-control simulations from a config file.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs=True):
        p.add_argument("config", nargs="?", help="configuration file")
        p.add_argument("--config", dest="config_opt", metavar="PATH", help="configuration file")
        if outputs:
            p.add_argument("--out", metavar="DIR", help="output directory (overrides execution.output)")
            p.add_argument("--seed", type=int, help="top-level seed (overrides execution.seed)")
            p.add_argument("--workers", type=int, help="worker threads (overrides execution.workers)")

    p = sub.add_parser("run", help="run the configured scenario")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", help="check a configuration without simulating")
    common(p, outputs=False)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("noise-sample", help="write noise trajectories and an ensemble summary")
    common(p)
    p.add_argument("--count", type=int, default=1, help="number of realizations (default 1)")
    p.set_defaults(func=cmd_noise_sample)
    p = sub.add_parser("version", help="print the version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Failure as exc:
        for m in exc.messages:
            print(f"error: {m}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
