"""Monte Carlo driver: probability of detection versus sampling rate.

One trial draws a scenario, samples and optionally corrupts the measurement
matrix, completes it and runs joint-sparse detection.  Trials are seeded from
``(seed, n_primary, rate, trial_index)`` so results do not depend on the
order or the process they run in.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .jointsparse import JointSparseParams, noise_budget_for, reconstruct
from .matcomp import CompletionParams, NoDataError, NumericalFailure, complete
from .scenario import (
    ModelConfig,
    SignalPowerError,
    add_noise,
    build_measurements,
    generate_scenario,
    sample_entries,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("sampling_rate", "n_primary", "pod", "false_alarm_rate", "trials")


class InfeasibleRateError(ValueError):
    def __init__(self, rate: float, n_channels: int, n_reports: int):
        self.min_reports = math.ceil(rate * n_channels - 1e-9)
        super().__init__(
            f"sampling rate {rate} needs n_reports >= {self.min_reports} "
            f"(have {n_reports}) for n_channels={n_channels}"
        )


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    sampling_rates: tuple[float, ...] = (0.08,)
    snr_db: float | None = None
    trials: int = 200
    completion: CompletionParams = field(default_factory=CompletionParams)
    jointsparse: JointSparseParams = field(default_factory=JointSparseParams)
    seed: int = 0
    # primary-user counts to sweep; empty means just model.n_primary
    n_primary_values: tuple[int, ...] = ()
    # "known": complete at rank n_primary; an int fixes the rank; None uses the full SVD
    rank_hint: str | int | None = "known"
    # rows of the completed matrix with fewer observations are left out of detection
    min_row_observations: int = 1
    # factor refinement fits the observations exactly, which amplifies noise
    refine_when_noisy: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.sampling_rates:
            raise ValueError("sampling_rates is empty")
        for rate in self.sampling_rates:
            if not 0 < rate <= 1:
                raise ValueError(f"sampling rate {rate} outside (0, 1]")
            sampling_rate_to_obs_prob(rate, self.model.n_channels, self.model.n_reports)
        for s in self.primaries:
            if s < 1:
                raise ValueError("POD experiments need at least one primary user")
            if s > self.model.n_channels:
                raise ValueError("more primary users than channels")
        if isinstance(self.rank_hint, str) and self.rank_hint != "known":
            raise ValueError(f"unknown rank_hint {self.rank_hint!r}")

    @property
    def primaries(self) -> tuple[int, ...]:
        return tuple(self.n_primary_values) or (self.model.n_primary,)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sampling_rates"] = list(self.sampling_rates)
        d["n_primary_values"] = list(self.n_primary_values)
        return d


@dataclass(frozen=True)
class TrialResult:
    true_channels: tuple[int, ...]
    detected_channels: tuple[int, ...]
    hits: int
    misses: int
    false_alarms: int
    completion_converged: bool
    masked_residual: float
    failure: str | None = None


@dataclass(frozen=True)
class PodRow:
    sampling_rate: float
    n_primary: int
    pod: float
    false_alarm_rate: float
    trials: int


@dataclass
class PodCurve:
    rows: list[PodRow] = field(default_factory=list)

    def sorted(self) -> "PodCurve":
        return PodCurve(sorted(self.rows, key=lambda r: (r.n_primary, r.sampling_rate)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow(
                [f"{r.sampling_rate:.6g}", r.n_primary, f"{r.pod:.6g}", f"{r.false_alarm_rate:.6g}", r.trials]
            )
        return buf.getvalue()

    def to_plot_dat(self) -> str:
        """Whitespace columns for gnuplot, one indexed block per primary-user count."""
        out = []
        for s in sorted({r.n_primary for r in self.rows}):
            out.append(f"# n_primary={s}\n# sampling_rate pod false_alarm_rate")
            for r in self.rows:
                if r.n_primary == s:
                    out.append(f"{r.sampling_rate:.6g} {r.pod:.6g} {r.false_alarm_rate:.6g}")
            out.append("\n")
        return "\n".join(out)

    def lookup(self, n_primary: int, rate: float) -> PodRow:
        for r in self.rows:
            if r.n_primary == n_primary and math.isclose(r.sampling_rate, rate):
                return r
        raise KeyError((n_primary, rate))


def sampling_rate_to_obs_prob(rate: float, n: int, p: int) -> float:
    """Per-entry observation probability giving ``rate * n * m`` expected entries."""
    q = rate * n / p
    if q > 1 + 1e-12:
        raise InfeasibleRateError(rate, n, p)
    return min(q, 1.0)


def pod(hits: int, misses: int) -> float:
    if hits + misses < 1:
        raise UndefinedMetricError("POD needs at least one primary-user event")
    return hits / (hits + misses)


def _rate_key(rate: float) -> int:
    return int(round(rate * 1_000_000_000))


def trial_seeds(seed: int, n_primary: int, rate: float, trial_index: int) -> list[np.random.SeedSequence]:
    """Independent streams for scenario, sampling and noise of one trial."""
    root = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, n_primary, _rate_key(rate), trial_index])
    return root.spawn(3)


def _completion_params(cfg: ExperimentConfig, n_primary: int) -> CompletionParams:
    params = cfg.completion
    if cfg.snr_db is not None and not cfg.refine_when_noisy:
        params = replace(params, refine_iters=0)
    hint = cfg.rank_hint
    if hint is None:
        return params
    rank = n_primary if hint == "known" else int(hint)
    rank = min(rank, cfg.model.n_reports, cfg.model.n_crs)
    return replace(params, rank_estimate=rank)


@dataclass
class TrialTrace:
    """Intermediate products of one trial, kept for the verbose demo."""

    result: TrialResult
    scenario: object = None
    measurements: object = None
    completion: object = None
    solution: object = None


def trace_trial(
    cfg: ExperimentConfig,
    rate: float,
    trial_index: int,
    n_primary: int | None = None,
    obs_prob: float | None = None,
) -> TrialTrace:
    """Run one trial and keep every intermediate. ``obs_prob`` bypasses the rate mapping."""
    s = cfg.model.n_primary if n_primary is None else n_primary
    if s < 1:
        raise UndefinedMetricError("POD experiments need at least one primary user")
    model = replace(cfg.model, n_primary=s)
    scn_seed, mask_seed, noise_seed = trial_seeds(cfg.seed, s, rate, trial_index)

    scn = generate_scenario(model, seed=scn_seed)
    truth = tuple(scn.occupied)
    if obs_prob is None:
        obs_prob = sampling_rate_to_obs_prob(rate, model.n_channels, model.n_reports)
    pm = sample_entries(build_measurements(scn), obs_prob, seed=mask_seed)
    trace = TrialTrace(result=None, scenario=scn, measurements=pm)

    def failed(reason: str, converged=False, resid=float("nan")) -> TrialTrace:
        log.debug("trial %d at rate %g failed: %s", trial_index, rate, reason)
        trace.result = TrialResult(truth, (), 0, s, 0, converged, resid, failure=reason)
        return trace

    try:
        if cfg.snr_db is not None:
            pm = trace.measurements = add_noise(pm, cfg.snr_db, seed=noise_seed)
        result = trace.completion = complete(pm, _completion_params(cfg, s))
    except (NumericalFailure, NoDataError, SignalPowerError) as exc:
        return failed(f"{type(exc).__name__}: {exc}")

    keep = pm.mask.sum(axis=1) >= cfg.min_row_observations
    if not keep.any():
        return failed("no row has enough observations", result.converged, result.masked_residual)
    js = cfg.jointsparse
    if pm.noise_std > 0:
        js = replace(js, noise_budget=noise_budget_for(pm.noise_std, int(keep.sum())))
    sol = trace.solution = reconstruct(scn.filters[keep], result.matrix[keep], js)

    hits = len(set(truth) & sol.detected)
    trace.result = TrialResult(
        true_channels=truth,
        detected_channels=tuple(sorted(sol.detected)),
        hits=hits,
        misses=s - hits,
        false_alarms=len(sol.detected - set(truth)),
        completion_converged=result.converged,
        masked_residual=result.masked_residual,
    )
    return trace


def run_trial(cfg: ExperimentConfig, rate: float, trial_index: int, n_primary: int | None = None) -> TrialResult:
    return trace_trial(cfg, rate, trial_index, n_primary).result


def _run_one(args):
    cfg, rate, index, s = args
    return run_trial(cfg, rate, index, s)


def aggregate(results: list[TrialResult], rate: float, n_primary: int, n_channels: int) -> PodRow:
    hits = sum(r.hits for r in results)
    misses = sum(r.misses for r in results)
    fa = sum(r.false_alarms for r in results)
    idle = len(results) * (n_channels - n_primary)
    return PodRow(
        sampling_rate=rate,
        n_primary=n_primary,
        pod=pod(hits, misses),
        false_alarm_rate=fa / idle if idle else 0.0,
        trials=len(results),
    )


def run_experiment(cfg: ExperimentConfig, progress=None) -> PodCurve:
    """Sweep every (n_primary, rate) pair with ``cfg.trials`` trials each."""
    jobs = [
        (cfg, rate, i, s)
        for s in sorted(cfg.primaries)
        for rate in sorted(cfg.sampling_rates)
        for i in range(cfg.trials)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (8 * cfg.workers))))
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            if progress is not None:
                progress(len(results), len(jobs))

    curve = PodCurve()
    for s in sorted(cfg.primaries):
        for rate in sorted(cfg.sampling_rates):
            batch = [r for (_, jr, _, js), r in zip(jobs, results) if js == s and jr == rate]
            row = aggregate(batch, rate, s, cfg.model.n_channels)
            log.info("n_primary=%d rate=%.4g pod=%.4f", s, rate, row.pod)
            curve.rows.append(row)
    return curve.sorted()
