"""Partial-IRM on threshold classifiers.

Environments are split into contiguous equal-size blocks and one threshold is
fitted per block by minimising the IRMv1 objective over the block's
environments. The classifier parameter in the gradient penalty is the
threshold itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from pirm_lab.envs import EnvironmentFamily, _risk_terms, env_risks, fairness_vrex
from pirm_lab.gauss import std_normal_pdf

FAIRNESS_MODES = ("assigned", "per_threshold_global")

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Partitioning:
    n_envs: int
    n_parts: int

    def __post_init__(self):
        if self.n_envs < 1 or self.n_parts < 1:
            raise ValueError("n_envs and n_parts must be positive")
        if self.n_envs % self.n_parts:
            raise ValueError(
                f"{self.n_parts} partitions do not divide {self.n_envs} environments"
            )

    @property
    def block_size(self) -> int:
        return self.n_envs // self.n_parts

    def block(self, j: int) -> range:
        if not 0 <= j < self.n_parts:
            raise IndexError(f"block {j} outside [0, {self.n_parts})")
        m = self.block_size
        return range(j * m, (j + 1) * m)

    @property
    def blocks(self) -> list[range]:
        return [self.block(j) for j in range(self.n_parts)]


def make_partitioning(n_envs: int, n_parts: int) -> Partitioning:
    return Partitioning(n_envs=n_envs, n_parts=n_parts)


@dataclass(frozen=True)
class SolveOptions:
    """Threshold search settings; a ``None`` bound means the family default."""

    search_lo: float | None = None
    search_hi: float | None = None
    grid_points: int = 4001
    refine_tol: float = 1e-9

    def __post_init__(self):
        if self.grid_points < 3:
            raise ValueError("grid_points must be at least 3")
        if not self.refine_tol > 0:
            raise ValueError("refine_tol must be positive")
        if (
            self.search_lo is not None
            and self.search_hi is not None
            and not self.search_lo < self.search_hi
        ):
            raise ValueError(
                f"degenerate search interval [{self.search_lo}, {self.search_hi}]"
            )

    def interval(self, family: EnvironmentFamily) -> tuple[float, float]:
        lo, hi = family.default_search_interval()
        lo = lo if self.search_lo is None else self.search_lo
        hi = hi if self.search_hi is None else self.search_hi
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"degenerate search interval [{lo}, {hi}]")
        return lo, hi


@dataclass(frozen=True)
class PirmSolution:
    partitioning: Partitioning
    lam: float
    thresholds: tuple[float, ...]
    env_risks: np.ndarray = field(repr=False)
    global_risk: float
    fairness: float
    fairness_mode: str = "assigned"

    @property
    def effective_lambda(self) -> float:
        return _effective_lambda(self.partitioning, self.lam)

    def __eq__(self, other):
        if not isinstance(other, PirmSolution):
            return NotImplemented
        return (
            self.partitioning == other.partitioning
            and self.lam == other.lam
            and self.thresholds == other.thresholds
            and np.array_equal(self.env_risks, other.env_risks)
            and self.global_risk == other.global_risk
            and self.fairness == other.fairness
            and self.fairness_mode == other.fairness_mode
        )


def _indices(env_indices: Sequence[int]) -> np.ndarray:
    idx = np.asarray(list(env_indices), dtype=int)
    if idx.size == 0:
        raise ValueError("IRMv1 objective needs at least one environment")
    return idx


def _objective_on(family: EnvironmentFamily, idx: np.ndarray, t, lam: float):
    t = np.asarray(t, dtype=float)
    risk, deriv = _risk_terms(family, idx, t[..., None])
    return np.sum(risk + lam * deriv * deriv, axis=-1)


def _objective_slope(family: EnvironmentFamily, idx: np.ndarray, t: float, lam: float):
    shift = idx * family.delta
    z1 = (t - (family.mu1 + shift)) / family.sigma
    z2 = (t - (family.mu2 + shift)) / family.sigma
    p1, p2 = std_normal_pdf(z1), std_normal_pdf(z2)
    deriv = (p2 - p1) / (2.0 * family.sigma)
    curv = (z1 * p1 - z2 * p2) / (2.0 * family.sigma**2)
    return float(np.sum(deriv + 2.0 * lam * deriv * curv))


def irmv1_objective(
    family: EnvironmentFamily, env_indices: Sequence[int], t: float, lam: float
) -> float:
    """Sum over environments of risk plus ``lam`` times squared risk slope."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    idx = _indices(env_indices)
    if np.any(idx < 0) or np.any(idx >= family.n_envs):
        raise IndexError("environment index out of range")
    if not math.isfinite(t):
        raise ValueError("threshold must be finite")
    return float(_objective_on(family, idx, t, lam))


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float
) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns (x, f(x)).

    Endpoints are evaluated too, so a monotone ``f`` returns the better end.
    """
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        # <= keeps the left bracket on ties
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    best = (x1, f1) if f1 <= f2 else (x2, f2)
    for x in (lo, hi):
        fx = f(x)
        if fx < best[1] or (fx == best[1] and x < best[0]):
            best = (x, fx)
    return best


def _tie_tol(value: float) -> float:
    return 1e-12 * max(1.0, abs(value))


def _polish(slope: Callable[[float], float], a: float, b: float) -> float | None:
    """Bisect on the exact slope; None unless it changes sign from - to +."""
    if not (slope(a) < 0.0 < slope(b)):
        return None
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if slope(mid) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def solve_threshold(
    family: EnvironmentFamily,
    env_indices: Sequence[int],
    lam: float,
    opts: SolveOptions | None = None,
) -> float:
    """Global minimiser of the IRMv1 objective over the search interval.

    A dense grid scan locates every grid-level local minimum that could hold
    the global one. Each is refined by golden-section search inside its
    bracketing cells and then polished by bisection on the analytic slope,
    since objective values alone cannot resolve a flat minimum much below
    sqrt(machine epsilon). Near-ties (within 1e-12 relative) go to the
    smallest threshold.
    """
    opts = opts or SolveOptions()
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    idx = _indices(env_indices)
    lo, hi = opts.interval(family)
    grid = np.linspace(lo, hi, opts.grid_points)
    values = _objective_on(family, idx, grid, lam)

    best = float(values.min())
    n = grid.size
    left = np.concatenate(([np.inf], values[:-1]))
    right = np.concatenate((values[1:], [np.inf]))
    # leftmost point of each run of equal values, so plateaus yield one candidate
    is_local = (values < left) & (values <= right)
    # the true minimum near a grid point cannot dip below it by more than the
    # rise to its higher neighbour
    upper = np.fmax(np.where(np.isinf(left), np.nan, left),
                    np.where(np.isinf(right), np.nan, right))
    slack = (upper - values) + _tie_tol(best)
    candidates = np.flatnonzero(is_local & (values - slack <= best))
    # on exact plateaus the leftmost near-tie grid point must be tried too
    first_tie = int(np.flatnonzero(values <= best + _tie_tol(best))[0])
    candidates = np.union1d(candidates, [first_tie])

    def f(t: float) -> float:
        return float(_objective_on(family, idx, t, lam))

    def slope(t: float) -> float:
        return _objective_slope(family, idx, t, lam)

    results = []
    for k in candidates:
        a = grid[max(k - 1, 0)]
        b = grid[min(k + 1, n - 1)]
        t, v = golden_section(f, a, b, opts.refine_tol)
        root = _polish(slope, a, b)
        if root is not None:
            v_root = f(root)
            if v_root <= v + _tie_tol(v):
                t, v = root, v_root
        results.append((t, v))
    best_val = min(v for _, v in results)
    tol = _tie_tol(best_val)
    return float(min(t for t, v in results if v <= best_val + tol))


def _effective_lambda(partitioning: Partitioning, lam: float) -> float:
    # singleton blocks are plain ERM
    return 0.0 if partitioning.block_size == 1 else lam


def solve_pirm(
    family: EnvironmentFamily,
    partitioning: Partitioning,
    lam: float,
    opts: SolveOptions | None = None,
    fairness_mode: str = "assigned",
    executor=None,
) -> PirmSolution:
    """Fit one threshold per block and score the assembled classifier.

    ``fairness_mode="assigned"`` scores each environment under its own block's
    threshold. ``"per_threshold_global"`` averages, over blocks, the fairness
    of that block's threshold applied to every environment.
    """
    if family.n_envs != partitioning.n_envs:
        raise ValueError(
            f"family has {family.n_envs} environments, partitioning expects "
            f"{partitioning.n_envs}"
        )
    if fairness_mode not in FAIRNESS_MODES:
        raise ValueError(f"unknown fairness mode {fairness_mode!r}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    opts = opts or SolveOptions()
    eff = _effective_lambda(partitioning, lam)

    def solve(block: range) -> float:
        return solve_threshold(family, block, eff, opts)

    if executor is None:
        thresholds = [solve(b) for b in partitioning.blocks]
    else:
        # map preserves block order regardless of completion order
        thresholds = list(executor.map(solve, partitioning.blocks))

    per_env = np.repeat(thresholds, partitioning.block_size)
    risks = env_risks(family, per_env)
    risk = float(np.mean(risks))
    if fairness_mode == "assigned":
        fair = fairness_vrex(risks)
    else:
        fair = float(
            np.mean(
                [fairness_vrex(env_risks(family, np.full(family.n_envs, t)))
                 for t in thresholds]
            )
        )
    return PirmSolution(
        partitioning=partitioning,
        lam=lam,
        thresholds=tuple(float(t) for t in thresholds),
        env_risks=risks,
        global_risk=risk,
        fairness=fair,
        fairness_mode=fairness_mode,
    )
