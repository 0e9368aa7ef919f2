"""Linear structural-equation regression task with two environment variables.

``e`` scales every noise term (``sigma_e[e]``); ``E`` sets how strongly ``X2``
drives the target (``f_values[E - 1]``)::

    X1, X2 ~ N(0, s^2),  Y = X1 + f(E) X2 + N(0, s^2),  X3 = Y + N(0, 1)

Only ``{X1}`` has a predictor of ``Y`` that is invariant across both
variables; within a fixed ``E``, ``{X1, X2}`` is invariant across ``e``.
Invariance is tested by exhaustive subset search with an IRMv1-style gradient
penalty for least squares.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from pirm_lab.envs import fairness_vrex

FEATURES = ("X1", "X2", "X3")
Cell = tuple[int, int]  # (E in 1..3, index into sigma_e)


class SingularFitError(ValueError):
    """The pooled design matrix is rank deficient."""


class NoInvariantSubsetError(ValueError):
    def __init__(self, penalties: Mapping[tuple[int, ...], float], tol: float):
        self.penalties = dict(penalties)
        self.tol = tol
        listing = ", ".join(
            f"{subset_name(s)}={p:.3g}" for s, p in self.penalties.items()
        )
        super().__init__(f"no subset has penalty below {tol:.3g}: {listing}")


def subset_name(subset: Sequence[int]) -> str:
    return "{" + ",".join(FEATURES[i] for i in subset) + "}"


ALL_SUBSETS: tuple[tuple[int, ...], ...] = tuple(
    s for r in (1, 2, 3) for s in itertools.combinations(range(3), r)
)


@dataclass(frozen=True)
class SemScenario:
    sigma_e: tuple[float, ...] = (0.2, 1.0, 2.0)
    f_values: tuple[float, float, float] = (1.0, 2.0, 3.0)
    n_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma_e", tuple(float(s) for s in self.sigma_e))
        object.__setattr__(self, "f_values", tuple(float(f) for f in self.f_values))
        if not self.sigma_e:
            raise ValueError("sigma_e must be non-empty")
        if any(s < 0 for s in self.sigma_e):
            raise ValueError("sigma_e entries must be non-negative")
        if len(self.f_values) != 3:
            raise ValueError("f_values needs one value per E in {1, 2, 3}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    @property
    def cells(self) -> list[Cell]:
        return [(E, e) for E in (1, 2, 3) for e in range(len(self.sigma_e))]


@dataclass(frozen=True)
class SemCell:
    x: np.ndarray  # (n, 3): X1, X2, X3
    y: np.ndarray


@dataclass(frozen=True)
class SemDataset:
    scenario: SemScenario
    cells: dict[Cell, SemCell]

    def all_cells(self) -> list[Cell]:
        return list(self.cells)

    def cells_for_E(self, E: int) -> list[Cell]:
        return [c for c in self.cells if c[0] == E]


@dataclass(frozen=True)
class FitResult:
    feature_subset: tuple[int, ...]
    coefficients: np.ndarray
    pooled_mse: float
    invariance_penalty: float | None = None

    @property
    def name(self) -> str:
        return subset_name(self.feature_subset)


def _cell_rng(seed: int, cell: Cell) -> np.random.Generator:
    # independent counter-based stream per cell, unaffected by generation order
    ss = np.random.SeedSequence(seed, spawn_key=cell)
    return np.random.Generator(np.random.Philox(ss))


def generate_sem(scenario: SemScenario) -> SemDataset:
    n = scenario.n_samples
    cells = {}
    for E, e in scenario.cells:
        s = scenario.sigma_e[e]
        rng = _cell_rng(scenario.seed, (E, e))
        x1 = s * rng.standard_normal(n)
        x2 = s * rng.standard_normal(n)
        y = x1 + scenario.f_values[E - 1] * x2 + s * rng.standard_normal(n)
        x3 = y + rng.standard_normal(n)
        x = np.column_stack([x1, x2, x3])
        x.setflags(write=False)
        y.setflags(write=False)
        cells[(E, e)] = SemCell(x=x, y=y)
    return SemDataset(scenario=scenario, cells=cells)


def _pooled(dataset: SemDataset, cells: Sequence[Cell], subset: Sequence[int]):
    if not cells:
        raise ValueError("cell selection is empty")
    cols = list(subset)
    x = np.concatenate([dataset.cells[c].x[:, cols] for c in cells])
    y = np.concatenate([dataset.cells[c].y for c in cells])
    return x, y


def _check_subset(subset: Sequence[int]) -> tuple[int, ...]:
    s = tuple(sorted(set(subset)))
    if not s or any(i not in (0, 1, 2) for i in s):
        raise ValueError(f"invalid feature subset {subset!r}")
    return s


def ols_fit(
    dataset: SemDataset, cells: Sequence[Cell], subset: Sequence[int]
) -> FitResult:
    """Least squares of Y on the subset features, pooled over ``cells``.

    No intercept: every variable is zero-mean by construction.
    """
    subset = _check_subset(subset)
    x, y = _pooled(dataset, cells, subset)
    w, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < len(subset):
        raise SingularFitError(
            f"design for {subset_name(subset)} has rank {rank} < {len(subset)}"
        )
    resid = y - x @ w
    return FitResult(subset, w, float(np.mean(resid * resid)))


def mse_gradient(cell: SemCell, subset: Sequence[int], w: np.ndarray) -> np.ndarray:
    """Gradient in ``w`` of the cell's mean squared error."""
    x = cell.x[:, list(subset)]
    return 2.0 * x.T @ (x @ w - cell.y) / len(cell.y)


def cell_mse(cell: SemCell, subset: Sequence[int], w: np.ndarray) -> float:
    resid = cell.y - cell.x[:, list(subset)] @ w
    return float(np.mean(resid * resid))


def invariance_penalty(
    dataset: SemDataset, scope: Sequence[Cell], subset: Sequence[int]
) -> float:
    """Sum over environments of the squared MSE gradient at the pooled fit.

    Each cell in ``scope`` is one environment.
    """
    if len(set(scope)) < 2:
        raise ValueError("invariance needs at least two environments in scope")
    fit = ols_fit(dataset, scope, subset)
    return float(
        sum(
            np.sum(mse_gradient(dataset.cells[c], fit.feature_subset, fit.coefficients) ** 2)
            for c in scope
        )
    )


def calibrate_tol(dataset: SemDataset, factor: float = 5.0) -> float:
    """``factor`` times the {X1} penalty over every cell, which is pure noise."""
    return factor * invariance_penalty(dataset, dataset.all_cells(), (0,))


def select_invariant_subset(
    dataset: SemDataset, scope: Sequence[Cell], tol: float
) -> FitResult:
    """Lowest-MSE subset whose penalty is below ``tol``.

    Ties go to the smaller subset, then lexicographic order.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    penalties: dict[tuple[int, ...], float] = {}
    passing = []
    for subset in ALL_SUBSETS:
        try:
            pen = invariance_penalty(dataset, scope, subset)
        except SingularFitError:
            pen = float("inf")
        penalties[subset] = pen
        if pen < tol:
            fit = ols_fit(dataset, scope, subset)
            passing.append((fit.pooled_mse, len(subset), subset, fit, pen))
    if not passing:
        raise NoInvariantSubsetError(penalties, tol)
    _, _, subset, fit, pen = min(passing, key=lambda r: r[:3])
    return FitResult(subset, fit.coefficients, fit.pooled_mse, pen)


@dataclass(frozen=True)
class MethodReport:
    method: str
    fits: dict[str, FitResult]  # scope label -> fit
    cell_mse: dict[Cell, float]
    mean_mse: float
    fairness: float


@dataclass(frozen=True)
class SemReport:
    scenario: SemScenario
    tol: float
    methods: list[MethodReport] = field(default_factory=list)

    def method(self, name: str) -> MethodReport:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)


def _method_report(dataset: SemDataset, method: str, fits: dict[str, FitResult],
                   fit_for: Mapping[Cell, FitResult]) -> MethodReport:
    mses = {
        c: cell_mse(dataset.cells[c], fit_for[c].feature_subset, fit_for[c].coefficients)
        for c in dataset.all_cells()
    }
    values = list(mses.values())
    return MethodReport(method, fits, mses, float(np.mean(values)), fairness_vrex(values))


def run_sem_experiment(scenario: SemScenario, tol: float | None = None) -> SemReport:
    """IRM over every cell, P-IRM within each E, and pooled least squares."""
    dataset = generate_sem(scenario)
    tol = calibrate_tol(dataset) if tol is None else tol
    cells = dataset.all_cells()

    irm = select_invariant_subset(dataset, cells, tol)
    irm_report = _method_report(dataset, "IRM-global", {"all": irm}, {c: irm for c in cells})

    per_E = {f"E={E}": select_invariant_subset(dataset, dataset.cells_for_E(E), tol)
             for E in (1, 2, 3)}
    pirm_report = _method_report(
        dataset, "P-IRM-per-E", per_E, {c: per_E[f"E={c[0]}"] for c in cells}
    )

    erm = ols_fit(dataset, cells, (0, 1, 2))
    erm_report = _method_report(dataset, "ERM-pooled", {"all": erm}, {c: erm for c in cells})
    return SemReport(scenario, tol, [irm_report, pirm_report, erm_report])
