"""Joint-sparse channel reconstruction by reweighted column-wise l1.

Every column of ``X = R G^T`` is recovered independently from the completed
measurement column through a weighted l1 program.  All columns share one
weight vector; once a channel is detected its weight drops to zero, which
passes the joint support to the other columns on the next pass.  ``X`` is
nonnegative, so each program is a linear (noiseless) or second-order cone
(noisy) program in ``x >= 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls


class InfeasibleError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3g})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class JointSparseParams:
    noise_budget: float = 0.0
    max_outer_iters: int = 5
    magnitude_ratio: float = 0.5
    max_primary: int = 5
    sparsity_cap: int | None = None  # None -> 2 * max_primary
    support_epsilon: float = 0.03
    solver_tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if not 0 < self.magnitude_ratio <= 1:
            raise ValueError("magnitude_ratio must lie in (0, 1]")
        if self.noise_budget < 0 or self.support_epsilon < 0 or self.solver_tolerance <= 0:
            raise ValueError("tolerances must be nonnegative")

    @property
    def cap(self) -> int:
        return self.sparsity_cap if self.sparsity_cap is not None else 2 * self.max_primary


@dataclass
class JointSparseSolution:
    X: np.ndarray
    detected: set[int]
    weights_final: np.ndarray
    outer_iterations: int
    per_column_residuals: np.ndarray
    failed_columns: list[int] = field(default_factory=list)
    weight_history: list[np.ndarray] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "X": self.X.tolist(),
            "detected": sorted(self.detected),
            "weights_final": self.weights_final.tolist(),
            "outer_iterations": self.outer_iterations,
            "per_column_residuals": self.per_column_residuals.tolist(),
            "failed_columns": list(self.failed_columns),
        }


def noise_budget_for(noise_std: float, n_reports: int, safety: float = 1.1) -> float:
    """Column residual budget for per-entry noise of standard deviation ``noise_std``."""
    return math.sqrt(n_reports) * noise_std * safety


def _settings(tol):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = s.tol_gap_rel = min(1e-8, tol)
    s.tol_feas = min(1e-8, tol)
    return s


def solve_weighted_l1(F, y, w, noise_budget=0.0, tol=1e-6) -> np.ndarray:
    """Minimize ``w @ x`` over ``x >= 0`` with ``||F x - y||_2 <= max(noise_budget, tol*||y||)``."""
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    p, n = F.shape
    if y.shape != (p,) or w.shape != (n,):
        raise ValueError("dimension mismatch")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    radius = max(noise_budget, tol * np.linalg.norm(y))
    if np.linalg.norm(y) <= radius:
        return np.zeros(n)

    # scale so the solver works near unit magnitudes; dynamic range across columns is large
    scale = np.linalg.norm(y)
    ys, rs = y / scale, radius / scale

    P = sp.csc_matrix((n, n))
    Fs = sp.csc_matrix(F)
    neg_eye = -sp.identity(n, format="csc")
    # x >= 0 and (rs, ys - F x) in the second-order cone
    A = sp.vstack([neg_eye, sp.csc_matrix((1, n)), Fs], format="csc")
    b = np.concatenate([np.zeros(n), [rs], ys])
    cones = [clarabel.NonnegativeConeT(n), clarabel.SecondOrderConeT(p + 1)]
    sol = clarabel.DefaultSolver(P, w, A, b, cones, _settings(tol)).solve()

    status = str(sol.status)
    x = np.maximum(np.asarray(sol.x, dtype=float), 0.0) * scale
    if status not in ("Solved", "AlmostSolved"):
        best = np.linalg.norm(F @ nnls(F, y)[0] - y)
        if best > radius:
            raise InfeasibleError("no nonnegative x meets the residual budget", best)
        raise InfeasibleError(f"solver stopped with status {status}", best)
    # project interior-point slack back inside the ball
    resid = np.linalg.norm(F @ x - y)
    if resid > radius:
        x = _polish(F, y, x, radius)
    return x


def _polish(F, y, x, radius):
    """Move ``x`` the shortest way toward a nonnegative fit until it is inside the ball."""
    support = np.flatnonzero(x > 1e-6 * max(x.max(), 1e-300))
    target = np.zeros_like(x)
    if support.size:
        target[support] = nnls(F[:, support], y)[0]
    if np.linalg.norm(F @ target - y) > radius:
        target, res = nnls(F, y)
        if res > radius:
            raise InfeasibleError("no nonnegative x meets the residual budget", res)
    # smallest t in [0, 1] with ||r0 + t d|| <= radius; convex in t, so take the first root
    r0 = F @ x - y
    d = F @ (target - x)
    a, b, c = d @ d, 2 * (r0 @ d), r0 @ r0 - radius**2
    disc = max(b * b - 4 * a * c, 0.0)
    t = 1.0 if a == 0 else min(1.0, (-b - np.sqrt(disc)) / (2 * a) * (1 + 1e-9) + 1e-15)
    out = np.maximum(x + t * (target - x), 0.0)
    if np.linalg.norm(F @ out - y) > radius:
        return target
    return out


def column_support(col: np.ndarray, eps: float) -> np.ndarray:
    top = col.max(initial=0.0)
    if top <= 0:
        return np.zeros(col.shape, dtype=bool)
    return col > eps * top


def detect_from_columns(X: np.ndarray, params: JointSparseParams = JointSparseParams()) -> set[int]:
    """Channels carrying a dominant entry in at least one sparse column of ``X``."""
    X = np.asarray(X, dtype=float)
    detected: set[int] = set()
    for col in X.T:
        top = col.max(initial=0.0)
        if top <= 0:
            continue
        if column_support(col, params.support_epsilon).sum() > params.cap:
            continue
        detected.update(int(i) for i in np.flatnonzero(col >= params.magnitude_ratio * top))
    return detected


def reconstruct(F: np.ndarray, M: np.ndarray, params: JointSparseParams = JointSparseParams()) -> JointSparseSolution:
    """Iteratively reweighted joint-sparse recovery of ``X`` with ``F X ~= M``."""
    F = np.asarray(F, dtype=float)
    M = np.asarray(M, dtype=float)
    p, n = F.shape
    if M.shape[0] != p:
        raise ValueError(f"F has {p} rows but M has {M.shape[0]}")
    m = M.shape[1]

    w = np.ones(n)
    detected: set[int] = set()
    history = [w.copy()]
    X = np.zeros((n, m))
    failed: list[int] = []
    outer = 0
    while outer < params.max_outer_iters:
        outer += 1
        X = np.zeros((n, m))
        failed = []
        for j in range(m):
            try:
                X[:, j] = solve_weighted_l1(F, M[:, j], w, params.noise_budget, params.solver_tolerance)
            except InfeasibleError:
                failed.append(j)
        new = detect_from_columns(X, params) - detected
        if not new:
            break
        detected |= new
        w[sorted(new)] = 0.0
        history.append(w.copy())

    residuals = np.linalg.norm(F @ X - M, axis=0)
    return JointSparseSolution(
        X=X,
        detected=detected,
        weights_final=w,
        outer_iterations=outer,
        per_column_residuals=residuals,
        failed_columns=failed,
        weight_history=history,
    )
