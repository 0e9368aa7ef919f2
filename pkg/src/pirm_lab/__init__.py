"""Partial invariant risk minimisation on Gaussian-mixture environments."""

from pirm_lab.envs import EnvironmentFamily, env_risk, env_risk_deriv, fairness_vrex, global_risk
from pirm_lab.experiments import ScenarioConfig, SweepRecord, run_lambda_sweep, run_partition_sweep
from pirm_lab.partition_solver import (
    Partitioning,
    PirmSolution,
    SolveOptions,
    irmv1_objective,
    make_partitioning,
    solve_pirm,
    solve_threshold,
)

__all__ = [
    "EnvironmentFamily",
    "Partitioning",
    "PirmSolution",
    "ScenarioConfig",
    "SolveOptions",
    "SweepRecord",
    "env_risk",
    "env_risk_deriv",
    "fairness_vrex",
    "global_risk",
    "irmv1_objective",
    "make_partitioning",
    "run_lambda_sweep",
    "run_partition_sweep",
    "solve_pirm",
    "solve_threshold",
]
