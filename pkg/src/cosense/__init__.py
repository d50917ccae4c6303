"""Collaborative spectrum sensing from sparse observations.

Low-rank completion of the fusion-center measurement matrix followed by
joint-sparse recovery of the occupied channels.
"""
from .harness import ExperimentConfig, PodCurve, run_experiment, run_trial
from .jointsparse import JointSparseParams, reconstruct
from .matcomp import CompletionParams, complete
from .scenario import ModelConfig, generate_scenario

__all__ = [
    "CompletionParams",
    "ExperimentConfig",
    "JointSparseParams",
    "ModelConfig",
    "PodCurve",
    "complete",
    "generate_scenario",
    "reconstruct",
    "run_experiment",
    "run_trial",
]
