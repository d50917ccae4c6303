"""Nuclear-norm matrix completion by fixed-point continuation (FPCA).

Solves ``min tau*||X||_* + 0.5*||P(X) - P(M_obs)||^2`` where ``P`` selects the
observed entries, by alternating a gradient step on the data term with
singular value shrinkage, over a decreasing sequence of ``tau`` values.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .scenario import PartialMeasurements


class NoDataError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class CompletionParams:
    tau_final: float | None = None  # None -> tau_final_scale * sigma_1(observed)
    tau_final_scale: float = 1e-8
    step_size: float = 1.0
    mtol: float = 1e-5
    max_inner_iters: int = 500
    continuation_factor: float = 0.25
    tau_start_scale: float = 0.25
    rank_estimate: int | None = None
    min_tau: float = 1e-300
    # Levenberg-Marquardt evaluations refitting the rank-r factors after
    # continuation; only used when rank_estimate is set, 0 disables
    refine_iters: int = 100
    refine_ridge: float = 1e-6

    def __post_init__(self):
        if not 0 < self.step_size < 2:
            raise ValueError("step_size must lie in (0, 2)")
        if not 0 < self.continuation_factor < 1:
            raise ValueError("continuation_factor must lie in (0, 1)")
        if self.mtol <= 0:
            raise ValueError("mtol must be positive")
        if self.tau_final is not None and self.tau_final <= 0:
            raise ValueError("tau_final must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be at least 1")


@dataclass
class CompletionResult:
    matrix: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    inner_iterations: int = 0
    refine_iterations: int = 0
    tau_schedule: list[float] = field(default_factory=list)
    converged: bool = False
    masked_residual: float = 0.0

    def diagnostics(self) -> dict:
        return {
            "objective_trace": list(self.objective_trace),
            "tau_schedule": list(self.tau_schedule),
            "inner_iterations": self.inner_iterations,
            "refine_iterations": self.refine_iterations,
            "converged": self.converged,
            "masked_residual": self.masked_residual,
        }


def truncated_svd(A: np.ndarray, r: int):
    """Top-``r`` singular triplets ``(U, sigma, V)`` of ``A``, sigma descending."""
    A = np.asarray(A, dtype=float)
    if not 1 <= r <= min(A.shape):
        raise ValueError(f"rank {r} outside [1, {min(A.shape)}]")
    U, sigma, Vt = np.linalg.svd(A, full_matrices=False)
    return U[:, :r], sigma[:r], Vt[:r].T


def shrink(A: np.ndarray, alpha: float, rank: int | None = None) -> np.ndarray:
    """Matrix shrinkage: soft-threshold the singular values of ``A`` by ``alpha``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    A = np.asarray(A, dtype=float)
    U, sigma, V = truncated_svd(A, rank or min(A.shape))
    sigma = np.maximum(sigma - alpha, 0.0)
    keep = sigma > 0
    return (U[:, keep] * sigma[keep]) @ V[:, keep].T


def gradient_step(Mk: np.ndarray, pm: PartialMeasurements, delta: float) -> np.ndarray:
    if Mk.shape != pm.values.shape:
        raise ValueError(f"shape mismatch {Mk.shape} vs {pm.values.shape}")
    # Mk - delta*(Mk - values), written so delta = 1 reproduces values exactly
    return np.where(pm.mask, (1.0 - delta) * Mk + delta * pm.values, Mk)


def converged(prev: np.ndarray, next: np.ndarray, mtol: float) -> bool:
    change = np.linalg.norm(next - prev)
    return bool(change / max(1.0, np.linalg.norm(prev)) < mtol)


def objective(X: np.ndarray, pm: PartialMeasurements, tau: float) -> float:
    nuc = np.linalg.svd(X, compute_uv=False).sum()
    resid = (X - pm.values)[pm.mask]
    return float(tau * nuc + 0.5 * resid @ resid)


def refine_factors(X, pm: PartialMeasurements, r: int, max_evals: int, ridge: float = 1e-6):
    """Damped Gauss-Newton refit of a rank-``r`` estimate to the observed entries.

    Works on balanced factors ``X ~ A B^T`` and minimizes the masked squared
    residual plus ``ridge**2 * (||A||^2 + ||B||^2)`` with Levenberg-Marquardt.
    The ridge pins the factor scaling freedom and the directions no
    observation touches.  Returns the refined matrix and the number of
    residual evaluations; falls back to ``X`` when the fit does not improve.
    """
    p, m = X.shape
    U, sigma, V = truncated_svd(X, r)
    root = np.sqrt(sigma)
    z0 = np.concatenate([(U * root).ravel(), (V * root).ravel()])
    rows, cols = np.nonzero(pm.mask)
    target = pm.values[rows, cols]
    k = rows.size
    n_a = p * r

    def residual(z):
        A, B = z[:n_a].reshape(p, r), z[n_a:].reshape(m, r)
        return np.concatenate([np.einsum("ij,ij->i", A[rows], B[cols]) - target, ridge * z])

    a_idx = rows[:, None] * r + np.arange(r)
    b_idx = n_a + cols[:, None] * r + np.arange(r)
    obs = np.arange(k)[:, None]

    def jacobian(z):
        A, B = z[:n_a].reshape(p, r), z[n_a:].reshape(m, r)
        J = np.zeros((k + z.size, z.size))
        J[obs, a_idx] = B[cols]
        J[obs, b_idx] = A[rows]
        J[k:] = ridge * np.eye(z.size)
        return J

    def masked_residual(Y):
        return np.linalg.norm((Y - pm.values)[pm.mask])

    sol = least_squares(residual, z0, jac=jacobian, method="lm", max_nfev=max_evals,
                        xtol=1e-12, ftol=1e-12, gtol=1e-12)
    z = sol.x
    Y = z[:n_a].reshape(p, r) @ z[n_a:].reshape(m, r).T
    if not np.all(np.isfinite(Y)) or masked_residual(Y) >= masked_residual(X):
        return X, sol.nfev
    # observations cannot bound unobserved directions; reject runaway solutions
    if np.linalg.norm(Y) > 10.0 * max(np.linalg.norm(X), np.linalg.norm(pm.values)):
        return X, sol.nfev
    return Y, sol.nfev


def complete(
    pm: PartialMeasurements,
    params: CompletionParams = CompletionParams(),
    *,
    track_objective: bool = False,
) -> CompletionResult:
    """Recover the full matrix from ``pm`` with tau-continuation FPCA.

    The objective trace records one value per inner iteration when
    ``track_objective`` is set, otherwise one value per tau stage.
    """
    if not pm.mask.any():
        raise NoDataError("no observed entries")
    values = pm.values
    if not np.all(np.isfinite(values)):
        raise NumericalFailure("non-finite observations", 0)
    sigma1 = np.linalg.norm(values, 2)
    result = CompletionResult(matrix=np.zeros_like(values))
    if sigma1 == 0.0:
        result.converged = True
        return result
    # Iterate on data scaled to unit spectral norm.  Both update steps are
    # positively homogeneous, so the iterates match the unscaled ones up to
    # this factor; only the max{1, ||X||} stopping test would otherwise
    # degrade to an absolute test for small-valued measurements.
    scale = sigma1
    scaled = replace(pm, values=values / scale)

    tau_final = params.tau_final if params.tau_final is not None else params.tau_final_scale * sigma1
    tau_final = max(tau_final, params.min_tau)
    tau = max(params.tau_start_scale * sigma1, tau_final)
    delta = params.step_size

    X = np.zeros_like(values)
    it = 0
    while True:
        result.tau_schedule.append(tau)
        stage_done = False
        for _ in range(params.max_inner_iters):
            it += 1
            X_new = shrink(gradient_step(X, scaled, delta), tau * delta / scale, params.rank_estimate)
            if not np.all(np.isfinite(X_new)):
                raise NumericalFailure("non-finite iterate", it)
            stage_done = converged(X, X_new, params.mtol)
            X = X_new
            if track_objective:
                result.objective_trace.append(objective(X * scale, pm, tau))
            if stage_done:
                break
        if not track_objective:
            result.objective_trace.append(objective(X * scale, pm, tau))
        if tau <= tau_final:
            break
        tau = max(params.continuation_factor * tau, tau_final)

    if params.rank_estimate and params.refine_iters:
        X, result.refine_iterations = refine_factors(
            X, scaled, params.rank_estimate, params.refine_iters, params.refine_ridge
        )
        if not np.all(np.isfinite(X)):
            raise NumericalFailure("non-finite refinement", it)

    X = X * scale
    result.matrix = X
    result.inner_iterations = it
    result.converged = stage_done
    obs = values[pm.mask]
    result.masked_residual = float(
        np.linalg.norm((X - values)[pm.mask]) / max(np.linalg.norm(obs), np.finfo(float).tiny)
    )
    if not np.isfinite(result.objective_trace[-1]):
        raise NumericalFailure("non-finite objective", it)
    return result
