"""Clipped confidence bounds and their width schedule.

The width multiplier in theoretical mode is

    beta = C + sigma * sqrt(2 * (gamma_prev + 1 + ln(N * (m + 1) / delta)))

where C bounds the norm of the unknown function, sigma is the observation
noise level, and gamma_prev is the information gain accumulated so far.
Bounds are clipped to [-C, C]: a function with norm at most C cannot
exceed C in absolute value under a normalized kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .gp import GPPosterior

THEORETICAL = "theoretical"
CONSTANT = "constant"


@dataclass(frozen=True, eq=False)
class BoundParams:
    """Inputs to the width schedule for one (agent, output) pair."""

    C: float
    sigma_noise: float
    delta: float
    n_agents: int
    n_constraints: int
    mode: str = THEORETICAL
    value: float | None = None

    def __post_init__(self):
        if self.mode not in (THEORETICAL, CONSTANT):
            raise InputError(f"unknown bound mode {self.mode!r}")
        if self.mode == CONSTANT and (self.value is None or self.value <= 0):
            raise InputError("constant mode requires a positive value")
        if not (0.0 < self.delta < 1.0):
            raise InputError("delta must lie in (0, 1)")
        if self.C < 0 or self.sigma_noise < 0:
            raise InputError("C and sigma_noise must be nonnegative")
        if self.n_agents < 1 or self.n_constraints < 0:
            raise InputError("need n_agents >= 1 and n_constraints >= 0")


def beta(params: BoundParams, gamma_prev: float) -> float:
    """Confidence width multiplier given the information gain so far."""
    if gamma_prev < 0:
        raise InputError("gamma_prev must be nonnegative")
    if params.mode == CONSTANT:
        return float(params.value)
    log_term = np.log(params.n_agents * (params.n_constraints + 1) / params.delta)
    return params.C + params.sigma_noise * np.sqrt(2.0 * (gamma_prev + 1.0 + log_term))


def lcb(post: GPPosterior, beta_value: float, C: float, x) -> float:
    """mean - beta * std, clipped into [-C, C], at a single point."""
    mean, var = post.predict(x)
    return float(np.clip(mean - beta_value * np.sqrt(var), -C, C))


def ucb(post: GPPosterior, beta_value: float, C: float, x) -> float:
    """mean + beta * std, clipped into [-C, C], at a single point."""
    mean, var = post.predict(x)
    return float(np.clip(mean + beta_value * np.sqrt(var), -C, C))


def bounds_from_moments(means: np.ndarray, variances: np.ndarray,
                        beta_value: float, C: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized clipped (lcb, ucb) arrays from posterior moments.

    Both bounds land in [-C, C]; the upper clip on lcb (and lower on ucb)
    only matters when the mean itself has strayed outside the norm box,
    and keeps lcb <= ucb in every state.
    """
    half = beta_value * np.sqrt(variances)
    low = np.clip(means - half, -C, C)
    high = np.clip(means + half, -C, C)
    return low, high


def bounds_grid(post: GPPosterior, beta_value: float, C: float) -> tuple[np.ndarray, np.ndarray]:
    """Clipped (lcb, ucb) over the posterior's attached grid."""
    means, variances = post.predict_grid()
    return bounds_from_moments(means, variances, beta_value, C)
