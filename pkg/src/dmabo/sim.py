"""Noisy local oracles and the agent/coordinator message contract.

Each agent owns one RNG stream per output, derived from the master seed
by a counter-style split on (seed, agent, output). Adding agents or
extending the horizon therefore never reshuffles another agent's noise,
and baselines replay exactly the same draws as the main algorithm.

The coordinator only ever sees (A_i x_i, lcb_g_i(x_i)) per agent; raw
observations stay local by construction of the report type.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .duals import DualState, dual_update
from .errors import InputError, ProtocolError
from .kernels import _as_points

_NOISE_TAG = 0x6E6F6973  # salt separating noise streams from other seed uses


def noise_streams(master_seed: int, agent_id: int, n_outputs: int) -> list[np.random.Generator]:
    """One generator per output (index 0 = objective, 1..m = constraints)."""
    return [
        np.random.default_rng(np.random.SeedSequence((master_seed, _NOISE_TAG, agent_id, j)))
        for j in range(n_outputs)
    ]


@dataclass(eq=False)
class AgentOracle:
    """Local zero-order oracle for one agent: f_i and the m functions g_{i,j}."""

    agent_id: int
    objective: Callable
    constraints: Sequence[Callable]
    sigma: float
    streams: Sequence[np.random.Generator]
    grid: np.ndarray

    def __post_init__(self):
        self.grid = _as_points(self.grid)
        self._domain = {row.tobytes(): i for i, row in enumerate(self.grid)}
        if len(self.streams) != len(self.constraints) + 1:
            raise InputError("need one rng stream per output (objective + constraints)")

    def in_domain(self, x) -> bool:
        return _as_points(x)[0].tobytes() in self._domain


def evaluate(oracle: AgentOracle, x) -> tuple[float, np.ndarray]:
    """Noisy evaluation (y_f, y_g) at a point of the agent's domain.

    Noise is Gaussian(0, sigma^2), drawn independently per output from the
    agent's own streams; sigma = 0 reproduces the ground truth exactly.
    """
    if not oracle.in_domain(x):
        raise InputError(f"point {np.asarray(x)!r} is outside agent {oracle.agent_id}'s domain")
    y_f = oracle.objective(x)
    y_g = np.array([g(x) for g in oracle.constraints], dtype=float)
    if oracle.sigma > 0:
        y_f += oracle.sigma * oracle.streams[0].standard_normal()
        for j in range(y_g.shape[0]):
            y_g[j] += oracle.sigma * oracle.streams[j + 1].standard_normal()
    return float(y_f), y_g


@dataclass(frozen=True)
class AgentReport:
    """What an agent sends to the coordinator each round (never raw ys)."""

    agent_id: int
    affine: np.ndarray      # A_i x_i^t, shape (l,)
    lcb_g: np.ndarray       # lcb of g_i at x_i^t, shape (m,)


def coordinator_round(reports: Sequence[AgentReport], dual: DualState,
                      b: np.ndarray, n_agents: int) -> DualState:
    """Reduce one round of reports into the next dual state.

    Requires exactly one report per agent id in [0, n_agents).
    """
    seen = sorted(r.agent_id for r in reports)
    if seen != list(range(n_agents)):
        raise ProtocolError(f"expected one report per agent 0..{n_agents - 1}, got ids {seen}")
    b = np.asarray(b, dtype=float).reshape(-1)
    # Summing in agent order keeps the result bit-identical under any
    # arrival permutation.
    ordered = sorted(reports, key=lambda r: r.agent_id)
    affine_residual = sum((np.asarray(r.affine, dtype=float).reshape(-1) for r in ordered),
                          start=-b)
    sum_lcb_g = sum((np.asarray(r.lcb_g, dtype=float).reshape(-1) for r in ordered),
                    start=np.zeros_like(dual.lam))
    return dual_update(dual, sum_lcb_g, affine_residual)
