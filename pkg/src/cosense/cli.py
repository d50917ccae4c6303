"""Command-line front end.

    cosense run --config PATH --out DIR [--override KEY=VAL ...]
    cosense demo [--seed N] [--override KEY=VAL ...]
    cosense fixture --out FILE [--seed N] [--override KEY=VAL ...]

Exit codes: 0 ok, 2 config error, 3 infeasible configuration, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .config import ConfigError, apply_overrides, build_config, load_raw
from .harness import (
    ExperimentConfig,
    InfeasibleRateError,
    UndefinedMetricError,
    run_experiment,
    sampling_rate_to_obs_prob,
    trace_trial,
)
from .matcomp import NumericalFailure
from .scenario import ModelConfig, build_measurements, generate_scenario, sample_entries

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
OUT_ENV = "COSENSE_OUT"

log = logging.getLogger("cosense")


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def write_manifest(path: Path, record: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def cmd_run(config_file, out_dir, overrides=()) -> int:
    try:
        raw = apply_overrides(load_raw(config_file), list(overrides))
        cfg = build_config(raw)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except InfeasibleRateError as exc:
        return _fail(EXIT_INFEASIBLE, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_path": str(config_file),
        "config": raw,
        "overrides": list(overrides),
        "resolved": cfg.to_dict(),
        "output_dir": str(out),
        "tool_version": tool_version(),
        "status": "running",
        "wall_time": None,
    }
    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, manifest)

    start = time.perf_counter()
    try:
        curve = run_experiment(cfg)
    except NumericalFailure as exc:
        manifest.update(status="numerical-failure", error=str(exc))
        write_manifest(manifest_path, manifest)
        return _fail(EXIT_NUMERICAL, str(exc))
    except UndefinedMetricError as exc:
        manifest.update(status="config-error", error=str(exc))
        write_manifest(manifest_path, manifest)
        return _fail(EXIT_CONFIG, str(exc))

    (out / "pod_curve.csv").write_text(curve.to_csv())
    (out / "plot.dat").write_text(curve.to_plot_dat())
    manifest.update(status="ok", wall_time=round(time.perf_counter() - start, 3))
    write_manifest(manifest_path, manifest)
    print(curve.to_csv(), end="")
    return EXIT_OK


def _demo_config(seed: int, overrides) -> tuple[ExperimentConfig, float | None, float]:
    raw = {"model": {"n_primary": 2}, "sampling_rates": [0.168], "trials": 1, "seed": seed}
    raw = apply_overrides(raw, list(overrides))
    # demo-only knobs that are not config fields
    obs_prob = raw.pop("obs_prob", None)
    rate = raw.get("sampling_rates", [0.168])
    rate = rate[0] if isinstance(rate, list) else rate
    return build_config(raw), obs_prob, float(rate)


def cmd_demo(seed: int = 1, overrides=()) -> int:
    try:
        cfg, obs_prob, rate = _demo_config(seed, overrides)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except InfeasibleRateError as exc:
        return _fail(EXIT_INFEASIBLE, str(exc))

    try:
        tr = trace_trial(cfg, rate, 0, obs_prob=obs_prob)
    except (NumericalFailure, ValueError) as exc:
        return _fail(EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}")

    res, pm = tr.result, tr.measurements
    m = cfg.model
    print(f"channels={m.n_channels} crs={m.n_crs} reports={m.n_reports} primary users={len(res.true_channels)}")
    print(f"true channels: {list(res.true_channels)}")
    print(f"observed entries |E| = {pm.n_observed} of {pm.mask.size} (obs_prob {pm.obs_prob:.4g})")
    if pm.snr_db is not None:
        print(f"snr {pm.snr_db:g} dB, noise std {pm.noise_std:.3g}")
    if tr.completion is not None:
        c = tr.completion
        trace = c.objective_trace
        print(
            f"completion: {len(c.tau_schedule)} tau stages, {c.inner_iterations} iterations, "
            f"{c.refine_iterations} refinement evals, converged={c.converged}"
        )
        print(f"  objective first/last: {trace[0]:.4g} / {trace[-1]:.4g}, masked residual {c.masked_residual:.3g}")
        if pm.full_reference is not None and np.any(pm.full_reference):
            err = np.linalg.norm(c.matrix - pm.full_reference) / np.linalg.norm(pm.full_reference)
            print(f"  relative recovery error {err:.3g}")
    if tr.solution is not None:
        print(f"joint-sparse: {tr.solution.outer_iterations} outer iterations")
    if res.failure:
        print(f"trial failed: {res.failure}")
        return _fail(EXIT_NUMERICAL, res.failure)
    print(f"detected channels: {list(res.detected_channels)}")
    print(f"hits={res.hits} misses={res.misses} false_alarms={res.false_alarms}")
    return EXIT_OK


def cmd_fixture(out_file, seed: int = 0, overrides=()) -> int:
    """Write one scenario and its partial observations as JSON."""
    try:
        cfg, obs_prob, rate = _demo_config(seed, overrides)
        if obs_prob is None:
            obs_prob = sampling_rate_to_obs_prob(rate, cfg.model.n_channels, cfg.model.n_reports)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except InfeasibleRateError as exc:
        return _fail(EXIT_INFEASIBLE, str(exc))
    rng = np.random.SeedSequence(seed).spawn(2)
    scn = generate_scenario(cfg.model, seed=rng[0])
    pm = sample_entries(build_measurements(scn), obs_prob, seed=rng[1])
    record = {"seed": seed, "scenario": scn.to_dict(), "measurements": pm.to_dict()}
    Path(out_file).write_text(json.dumps(record) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosense", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p):
        p.add_argument(
            "--override", "--overrides", dest="overrides", nargs="+", action="extend",
            default=[], metavar="KEY=VAL", help="dotted config override, repeatable",
        )

    run = sub.add_parser("run", help="run a POD experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=os.environ.get(OUT_ENV, "results"))
    add_overrides(run)

    demo = sub.add_parser("demo", help="one verbose trial")
    demo.add_argument("--seed", type=int, default=1)
    add_overrides(demo)

    fix = sub.add_parser("fixture", help="dump a scenario and its observations as JSON")
    fix.add_argument("--out", required=True)
    fix.add_argument("--seed", type=int, default=0)
    add_overrides(fix)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out, args.overrides)
    if args.command == "demo":
        return cmd_demo(args.seed, args.overrides)
    return cmd_fixture(args.out, args.seed, args.overrides)


if __name__ == "__main__":
    sys.exit(main())
