"""Partition-count and lambda sweeps over Gaussian-mixture scenarios."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from pirm_lab.envs import EnvironmentFamily
from pirm_lab.partition_solver import (
    FAIRNESS_MODES,
    SolveOptions,
    make_partitioning,
    solve_pirm,
)

DEFAULT_PARTITIONS = (1, 2, 3, 4, 6, 12, 24)
# (sigma, delta) pairs of the four Gaussian-mixture scenarios
DEFAULT_SCENARIOS = ((0.1, 0.1), (1.0, 0.1), (0.1, 1.0), (1.0, 1.0))
DEFAULT_LAMBDA = 10.0


def default_lambda_grid(lo: float = 1e-3, hi: float = 1e3, count: int = 25) -> list[float]:
    return [float(x) for x in np.logspace(np.log10(lo), np.log10(hi), count)]


def scenario_label(sigma: float, delta: float) -> str:
    """Stable key for a (sigma, delta) pair.

    sigma 0.1 is "large" class separation and sigma 1 "min"; delta 0.1 is
    "high" environment overlap and delta 1 "low".
    """
    sep = {0.1: "large", 1.0: "min"}.get(float(sigma))
    overlap = {0.1: "high", 1.0: "low"}.get(float(delta))
    if sep is None or overlap is None:
        return f"sigma-{sigma:g}_delta-{delta:g}"
    return f"sep-{sep}_overlap-{overlap}"


@dataclass(frozen=True)
class ScenarioConfig:
    mu1: float = 1.0
    mu2: float = 2.0
    sigma: float = 1.0
    delta: float = 0.1
    n_envs: int = 24
    lam: float = DEFAULT_LAMBDA
    partition_counts: tuple[int, ...] = DEFAULT_PARTITIONS
    fairness_mode: str = "assigned"
    solve_options: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        object.__setattr__(self, "partition_counts", tuple(self.partition_counts))
        if not self.partition_counts:
            raise ValueError("need at least one partition count")
        for k in self.partition_counts:
            make_partitioning(self.n_envs, k)
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.fairness_mode not in FAIRNESS_MODES:
            raise ValueError(f"unknown fairness mode {self.fairness_mode!r}")
        self.family()

    def family(self) -> EnvironmentFamily:
        return EnvironmentFamily(self.mu1, self.mu2, self.sigma, self.delta, self.n_envs)

    @property
    def label(self) -> str:
        return scenario_label(self.sigma, self.delta)


def default_scenarios(**overrides) -> list[ScenarioConfig]:
    return [ScenarioConfig(sigma=s, delta=d, **overrides) for s, d in DEFAULT_SCENARIOS]


@dataclass(frozen=True)
class SweepRecord:
    scenario_label: str
    sigma: float
    delta: float
    n_parts: int
    lam: float
    fairness_mode: str
    global_risk: float
    fairness: float
    thresholds: tuple[float, ...]


def thread_count() -> int:
    """Worker cap from ``PIRM_LAB_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("PIRM_LAB_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("PIRM_LAB_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _ordered_map(fn: Callable, items: Sequence) -> list:
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _solve_record(config: ScenarioConfig, n_parts: int, lam: float) -> SweepRecord:
    sol = solve_pirm(
        config.family(),
        make_partitioning(config.n_envs, n_parts),
        lam,
        config.solve_options,
        fairness_mode=config.fairness_mode,
    )
    return SweepRecord(
        scenario_label=config.label,
        sigma=config.sigma,
        delta=config.delta,
        n_parts=n_parts,
        lam=lam,
        fairness_mode=config.fairness_mode,
        global_risk=sol.global_risk,
        fairness=sol.fairness,
        thresholds=sol.thresholds,
    )


def run_partition_sweep(config: ScenarioConfig) -> list[SweepRecord]:
    counts = sorted(set(config.partition_counts))
    return _ordered_map(lambda k: _solve_record(config, k, config.lam), counts)


def run_lambda_sweep(
    config: ScenarioConfig, lambda_grid: Iterable[float] | None = None
) -> list[SweepRecord]:
    grid = default_lambda_grid() if lambda_grid is None else [float(x) for x in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(not lam >= 0 for lam in grid):
        raise ValueError("lambda values must be non-negative")
    jobs = [(lam, k) for lam in sorted(grid) for k in sorted(set(config.partition_counts))]
    return _ordered_map(lambda job: _solve_record(config, job[1], job[0]), jobs)


def run_default_partition_sweeps(**overrides) -> list[SweepRecord]:
    records: list[SweepRecord] = []
    for config in default_scenarios(**overrides):
        records.extend(run_partition_sweep(config))
    return records
