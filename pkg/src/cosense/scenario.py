"""Ground-truth instances of the collaborative sensing model.

A scenario holds the channel occupancy, the path-loss/fading gain matrix and
the random filter matrix.  The fusion center sees ``M = F diag(occupancy) G^T``
only on a random subset of entries, optionally corrupted by Gaussian noise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np


class SignalPowerError(ValueError):
    """Raised when noise is requested for observations carrying no signal."""


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int = 100
    n_crs: int = 20
    n_reports: int = 40
    n_primary: int = 1
    loss_exponent: float = 3.0
    area_side: float = 1000.0
    min_distance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_channels", "n_crs", "n_reports"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.n_primary <= self.n_channels:
            raise ValueError("n_primary must lie in [0, n_channels]")
        if self.loss_exponent <= 0 or self.area_side <= 0 or self.min_distance <= 0:
            raise ValueError("loss_exponent, area_side and min_distance must be positive")
        if self.n_crs >= self.n_channels:
            warnings.warn("n_crs >= n_channels; the sensing model assumes fewer CRs than channels")


@dataclass(frozen=True, eq=False)
class Scenario:
    occupancy: np.ndarray  # (n,) 0/1
    gains: np.ndarray  # (m, n)
    filters: np.ndarray  # (p, n)
    positions_cr: np.ndarray  # (m, 2)
    positions_pu: np.ndarray  # (s, 2), one transmitter per occupied channel
    fading: np.ndarray  # (m, n)
    loss_exponent: float = 3.0
    min_distance: float = 1.0

    @property
    def occupied(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.occupancy)]

    def to_dict(self) -> dict:
        return {
            "occupancy": self.occupancy.astype(int).tolist(),
            "gains": self.gains.tolist(),
            "filters": self.filters.tolist(),
            "positions_cr": self.positions_cr.tolist(),
            "positions_pu": self.positions_pu.tolist(),
            "fading": self.fading.tolist(),
            "loss_exponent": self.loss_exponent,
            "min_distance": self.min_distance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        n = len(d["occupancy"])
        return cls(
            occupancy=np.asarray(d["occupancy"], dtype=int),
            gains=np.asarray(d["gains"], dtype=float).reshape(-1, n),
            filters=np.asarray(d["filters"], dtype=float).reshape(-1, n),
            positions_cr=np.asarray(d["positions_cr"], dtype=float).reshape(-1, 2),
            positions_pu=np.asarray(d["positions_pu"], dtype=float).reshape(-1, 2),
            fading=np.asarray(d["fading"], dtype=float).reshape(-1, n),
            loss_exponent=float(d["loss_exponent"]),
            min_distance=float(d["min_distance"]),
        )


@dataclass(frozen=True, eq=False)
class PartialMeasurements:
    values: np.ndarray  # (p, m), zero off the mask
    mask: np.ndarray  # (p, m) bool
    obs_prob: float
    snr_db: float | None = None
    noise_std: float = 0.0
    full_reference: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.obs_prob <= 1.0:
            raise ValueError("obs_prob must lie in [0, 1]")
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask shapes differ")

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "mask": self.mask.astype(int).tolist(),
            "obs_prob": self.obs_prob,
            "snr_db": self.snr_db,
            "noise_std": self.noise_std,
            "full_reference": None if self.full_reference is None else self.full_reference.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartialMeasurements":
        ref = d.get("full_reference")
        return cls(
            values=np.asarray(d["values"], dtype=float),
            mask=np.asarray(d["mask"], dtype=int).astype(bool),
            obs_prob=float(d["obs_prob"]),
            snr_db=d.get("snr_db"),
            noise_std=float(d.get("noise_std", 0.0)),
            full_reference=None if ref is None else np.asarray(ref, dtype=float),
        )


@dataclass(frozen=True)
class CoherenceStats:
    mu0: float
    mu1: float
    rank: int


def gain(d, alpha, h_mag):
    """Path-loss/fading gain ``d**(-alpha/2) * |h|``; works elementwise on arrays."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or alpha <= 0:
        raise ValueError("distance and loss exponent must be positive")
    out = d ** (-alpha / 2.0) * np.asarray(h_mag, dtype=float)
    return float(out) if out.ndim == 0 else out


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_scenario(cfg: ModelConfig, seed=None) -> Scenario:
    """Draw a random scenario. ``seed`` overrides ``cfg.seed`` when given."""
    rng = _rng(cfg.seed if seed is None else seed)
    n, m, p, s = cfg.n_channels, cfg.n_crs, cfg.n_reports, cfg.n_primary

    occupied = np.sort(rng.choice(n, size=s, replace=False))
    occupancy = np.zeros(n, dtype=int)
    occupancy[occupied] = 1

    positions_cr = rng.uniform(0.0, cfg.area_side, size=(m, 2))
    positions_pu = rng.uniform(0.0, cfg.area_side, size=(s, 2))
    # Rayleigh with E|h|^2 = 1
    fading = rng.rayleigh(scale=1.0 / math.sqrt(2.0), size=(m, n))

    # unoccupied channels have no transmitter; their gains are never seen through R
    gains = np.zeros((m, n))
    if s:
        d = np.linalg.norm(positions_cr[:, None, :] - positions_pu[None, :, :], axis=2)
        d = np.maximum(d, cfg.min_distance)
        gains[:, occupied] = gain(d, cfg.loss_exponent, fading[:, occupied])

    filters = rng.standard_normal((p, n))
    return Scenario(
        occupancy=occupancy,
        gains=gains,
        filters=filters,
        positions_cr=positions_cr,
        positions_pu=positions_pu,
        fading=fading,
        loss_exponent=cfg.loss_exponent,
        min_distance=cfg.min_distance,
    )


def build_measurements(scn: Scenario) -> np.ndarray:
    F, G, occ = scn.filters, scn.gains, np.asarray(scn.occupancy)
    if F.shape[1] != occ.shape[0] or G.shape[1] != occ.shape[0]:
        raise ValueError(
            f"dimension mismatch: F {F.shape}, G {G.shape}, occupancy {occ.shape}"
        )
    return (F * occ) @ G.T


def sample_entries(M: np.ndarray, obs_prob: float, seed=None) -> PartialMeasurements:
    if not 0.0 <= obs_prob <= 1.0:
        raise ValueError("obs_prob must lie in [0, 1]")
    M = np.asarray(M, dtype=float)
    mask = _rng(seed).random(M.shape) < obs_prob
    return PartialMeasurements(
        values=np.where(mask, M, 0.0),
        mask=mask,
        obs_prob=float(obs_prob),
        full_reference=M.copy(),
    )


def noise_std_for(pm: PartialMeasurements, snr_db: float) -> float:
    """Per-entry noise standard deviation giving ``snr_db`` over the observed entries."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    observed = pm.values[pm.mask]
    power = float(np.mean(observed**2)) if observed.size else 0.0
    if power == 0.0:
        raise SignalPowerError("observed entries carry no signal power")
    return math.sqrt(power / 10 ** (snr_db / 10.0))


def add_noise(pm: PartialMeasurements, snr_db: float, seed=None) -> PartialMeasurements:
    """Add i.i.d. Gaussian noise to the observed entries at the given SNR.

    ``snr_db = inf`` returns ``pm`` unchanged.
    """
    std = noise_std_for(pm, snr_db)
    if std == 0.0:
        return pm
    noise = _rng(seed).normal(0.0, std, size=pm.values.shape)
    return replace(
        pm,
        values=np.where(pm.mask, pm.values + noise, 0.0),
        snr_db=float(snr_db),
        noise_std=std,
    )


def coherence_stats(M: np.ndarray, s: int) -> CoherenceStats:
    """Incoherence witnesses of the rank-``s`` SVD factors of ``M`` (diagnostic only)."""
    M = np.asarray(M, dtype=float)
    if not np.any(M):
        raise ValueError("coherence is undefined for the zero matrix")
    if not 1 <= s <= min(M.shape):
        raise ValueError("s must lie in [1, min(M.shape)]")
    U, sig, Vt = np.linalg.svd(M, full_matrices=False)
    U, sig, V = U[:, :s], sig[:s], Vt[:s].T
    mu0 = max((U**2).sum(axis=1).max(), (V**2).sum(axis=1).max()) / s
    mu1 = np.abs((U * sig) @ V.T).max() / (math.sqrt(s) * sig[0])
    rank = int(np.sum(np.linalg.svd(M, compute_uv=False) > 1e-10 * sig[0]))
    return CoherenceStats(mu0=float(mu0), mu1=float(mu1), rank=rank)
