"""Shared driver for the POD sweeps: load a config, run it, write CSV and a plot table."""
import argparse
import sys
import time
from pathlib import Path

from cosense.config import load_config
from cosense.harness import run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main(default_config: str, default_out: str) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / default_config))
    ap.add_argument("--out", default=str(ROOT / "results" / default_out))
    ap.add_argument("--trials", type=int, help="override the trial count")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    overrides = [f"workers={args.workers}"]
    if args.trials:
        overrides.append(f"trials={args.trials}")
    cfg, _ = load_config(args.config, overrides)

    start = time.perf_counter()

    def progress(done, total):
        print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    curve = run_experiment(cfg, progress=progress)
    print(file=sys.stderr)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pod_curve.csv").write_text(curve.to_csv())
    (out / "plot.dat").write_text(curve.to_plot_dat())

    print(f"{'s':>2} {'rate':>6} {'POD':>7} {'FA rate':>9}")
    for row in curve.rows:
        print(f"{row.n_primary:>2} {row.sampling_rate:>6.3f} {row.pod:>7.4f} {row.false_alarm_rate:>9.2e}")
    print(f"wrote {out} in {time.perf_counter() - start:.0f} s")
