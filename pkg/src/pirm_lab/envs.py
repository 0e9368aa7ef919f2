"""Shifted Gaussian-mixture environments and their closed-form 0-1 risks.

Environment ``i`` mixes N(mu1 + i*delta, sigma^2) (class 1) and
N(mu2 + i*delta, sigma^2) (class 2) with equal weights. A threshold classifier
labels ``x < t`` as class 1 and everything else as class 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from pirm_lab.gauss import std_normal_cdf, std_normal_pdf


@dataclass(frozen=True)
class EnvironmentFamily:
    mu1: float
    mu2: float
    sigma: float
    delta: float
    n_envs: int

    def __post_init__(self):
        if not self.mu1 < self.mu2:
            raise ValueError(f"need mu1 < mu2, got {self.mu1} and {self.mu2}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        if int(self.n_envs) != self.n_envs or self.n_envs < 1:
            raise ValueError(f"n_envs must be a positive integer, got {self.n_envs}")

    @property
    def center(self) -> float:
        """Midpoint of the whole family, (mu1 + mu2)/2 + (N - 1)*delta/2."""
        return 0.5 * (self.mu1 + self.mu2) + 0.5 * (self.n_envs - 1) * self.delta

    def midpoint(self, i: int) -> float:
        m1, m2 = class_means(self, i)
        return 0.5 * (m1 + m2)

    def default_search_interval(self) -> tuple[float, float]:
        lo = self.mu1 - 6.0 * self.sigma
        hi = self.mu2 + (self.n_envs - 1) * self.delta + 6.0 * self.sigma
        return lo, hi


def _check_index(family: EnvironmentFamily, i) -> None:
    idx = np.asarray(i)
    if np.any(idx < 0) or np.any(idx >= family.n_envs):
        raise IndexError(f"environment index {i!r} outside [0, {family.n_envs})")


def class_means(family: EnvironmentFamily, i: int) -> tuple[float, float]:
    _check_index(family, i)
    shift = i * family.delta
    return family.mu1 + shift, family.mu2 + shift


def _risk_terms(family: EnvironmentFamily, idx, t):
    # broadcasting: idx and t may be arrays of compatible shape
    shift = np.asarray(idx, dtype=float) * family.delta
    z1 = (t - (family.mu1 + shift)) / family.sigma
    z2 = (t - (family.mu2 + shift)) / family.sigma
    # class-1 mass above t is cdf(-z1); computed directly to avoid 1 - cdf cancellation
    risk = 0.5 * std_normal_cdf(-z1) + 0.5 * std_normal_cdf(z2)
    deriv = (std_normal_pdf(z2) - std_normal_pdf(z1)) / (2.0 * family.sigma)
    return risk, deriv


def env_risk(family: EnvironmentFamily, i: int, t: float) -> float:
    """0-1 risk of threshold ``t`` on environment ``i``."""
    _check_index(family, i)
    risk, _ = _risk_terms(family, i, t)
    return risk


def env_risk_deriv(family: EnvironmentFamily, i: int, t: float) -> float:
    """Exact d/dt of :func:`env_risk`."""
    _check_index(family, i)
    _, deriv = _risk_terms(family, i, t)
    return deriv


def env_risks(family: EnvironmentFamily, thresholds: Sequence[float]) -> np.ndarray:
    """Risk of every environment under its own threshold."""
    t = np.asarray(thresholds, dtype=float)
    if t.shape != (family.n_envs,):
        raise ValueError(
            f"expected {family.n_envs} thresholds, got shape {t.shape}"
        )
    risk, _ = _risk_terms(family, np.arange(family.n_envs), t)
    return np.asarray(risk)


def global_risk(family: EnvironmentFamily, thresholds: Sequence[float]) -> float:
    """Uniform average of per-environment risks."""
    return float(np.mean(env_risks(family, thresholds)))


def fairness_vrex(risks: Sequence[float]) -> float:
    """V-REx penalty: half the mean squared pairwise difference of risks.

    Equal to the population variance of ``risks``.
    """
    r = np.asarray(risks, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("fairness of an empty risk vector is undefined")
    diff = r[:, None] - r[None, :]
    return float(np.sum(diff * diff) / (2.0 * r.size**2))
