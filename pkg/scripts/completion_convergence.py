"""Trace the completion objective and error on one sensing matrix.

Prints, per continuation stage, the threshold, the objective at the end of
the stage and the relative error against the full matrix.
"""
import argparse

import numpy as np

from cosense.harness import sampling_rate_to_obs_prob
from cosense.matcomp import CompletionParams, complete
from cosense.scenario import ModelConfig, build_measurements, generate_scenario, sample_entries


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rate", type=float, default=0.168)
    ap.add_argument("--n-primary", type=int, default=3)
    ap.add_argument("--rank-known", action="store_true")
    args = ap.parse_args()

    cfg = ModelConfig(n_primary=args.n_primary, seed=args.seed)
    M = build_measurements(generate_scenario(cfg))
    q = sampling_rate_to_obs_prob(args.rate, cfg.n_channels, cfg.n_reports)
    pm = sample_entries(M, q, seed=args.seed + 1)
    params = CompletionParams(rank_estimate=args.n_primary if args.rank_known else None)
    res = complete(pm, params)

    print(f"observed {pm.n_observed} of {M.size} entries (q={q:.3f})")
    for tau, obj in zip(res.tau_schedule, res.objective_trace):
        print(f"tau={tau:10.3e}  objective={obj:12.5e}")
    err = np.linalg.norm(res.matrix - M) / np.linalg.norm(M)
    print(f"inner iterations {res.inner_iterations}, refinement evals {res.refine_iterations}")
    print(f"converged={res.converged} relative error {err:.3e}")


if __name__ == "__main__":
    main()
