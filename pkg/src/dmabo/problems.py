"""Problem instances on finite grids and the brute-force reference solver.

An instance bundles per-agent grids, ground-truth objective/constraint
functions, affine data, norm-bound estimates, and certified slack. Ground
truth is tabulated (or closed-form for power allocation) and is used by
the oracles and by scoring only; the optimizer sees noisy evaluations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleError, InputError
from .kernels import KernelSpec, TabulatedFunction, _as_points, sample_prior_function
from .sim import AgentOracle, noise_streams

# Inflation factor turning an observed sup-norm into a usable norm bound.
NORM_BOUND_INFLATION = 1.2
AFFINE_TOL = 1e-9
DEFAULT_TUPLE_CAP = 10_000_000

_SAMPLE_TAG = 0x67700A  # salt for prior-sample seeds, distinct from noise streams


class NegLogUtility:
    """Objective -a * ln(1 + b * p) for the power-allocation family."""

    def __init__(self, a: float, b: float):
        if a <= 0 or b <= 0:
            raise InputError("utility coefficients must be positive")
        self.a = float(a)
        self.b = float(b)

    def __call__(self, p) -> float:
        p = float(np.asarray(p).reshape(-1)[0])
        return -self.a * np.log1p(self.b * p)

    def values_on(self, grid) -> np.ndarray:
        g = _as_points(grid)[:, 0]
        return -self.a * np.log1p(self.b * g)

    def to_json(self) -> dict:
        return {"type": "log_utility", "a": self.a, "b": self.b}


def _values_on(fn, grid) -> np.ndarray:
    if isinstance(fn, TabulatedFunction):
        return fn.values.copy()
    if isinstance(fn, NegLogUtility):
        return fn.values_on(grid)
    return np.array([fn(row) for row in _as_points(grid)], dtype=float)


@dataclass(eq=False)
class ProblemInstance:
    kind: str
    n_agents: int
    m: int                                 # number of coupled black-box constraints
    l: int                                 # number of affine constraints (0 = none)
    grids: list[np.ndarray]                # per agent, (G_i, n_i)
    objectives: list[Callable]
    constraints: list[list[Callable]]      # [agent][j]
    A: list[np.ndarray]                    # per agent, (l, n_i); empty list if l == 0
    b: np.ndarray                          # (l,)
    C: np.ndarray                          # (N, m+1) norm bounds, column 0 = objective
    sigma_noise: float
    xi: float | None = None                # certified slack; None when m == 0
    tilde_rho: float | None = None         # interior-ball radius; None when l == 0
    optimum: tuple[list[np.ndarray], float] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_agents < 1:
            raise InputError("need at least one agent")
        self.grids = [_as_points(g) for g in self.grids]
        if any(g.shape[0] == 0 for g in self.grids):
            raise InputError("grids must be nonempty")
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.C = np.asarray(self.C, dtype=float)
        if self.C.shape != (self.n_agents, self.m + 1):
            raise InputError(f"C must have shape (N, m+1) = {(self.n_agents, self.m + 1)}")
        if self.l > 0:
            self.A = [np.asarray(a, dtype=float).reshape(self.l, self.grids[i].shape[1])
                      for i, a in enumerate(self.A)]
        else:
            self.A = []

    # --- tabulated views used by solvers and the algorithm loop ---

    def objective_table(self, i: int) -> np.ndarray:
        return _values_on(self.objectives[i], self.grids[i])

    def constraint_table(self, i: int) -> np.ndarray:
        """(G_i, m) array of g_{i,j} over agent i's grid."""
        if self.m == 0:
            return np.zeros((self.grids[i].shape[0], 0))
        return np.column_stack([_values_on(g, self.grids[i]) for g in self.constraints[i]])

    def affine_table(self, i: int) -> np.ndarray:
        """(G_i, l) array of A_i x over agent i's grid."""
        if self.l == 0:
            return np.zeros((self.grids[i].shape[0], 0))
        return self.grids[i] @ self.A[i].T

    def n_tuples(self) -> int:
        n = 1
        for g in self.grids:
            n *= g.shape[0]
        return n

    def make_oracles(self, master_seed: int) -> list[AgentOracle]:
        return [
            AgentOracle(
                agent_id=i,
                objective=self.objectives[i],
                constraints=self.constraints[i],
                sigma=self.sigma_noise,
                streams=noise_streams(master_seed, i, self.m + 1),
                grid=self.grids[i],
            )
            for i in range(self.n_agents)
        ]

    def c_totals(self) -> np.ndarray:
        """C_j = sum_i C_{i,j} for j = 0..m."""
        return self.C.sum(axis=0)


@dataclass(frozen=True)
class ReferenceSolution:
    x_star: list[np.ndarray]
    f_star: float
    xi: float | None            # best certified slack over affine-feasible tuples
    n_feasible: int


def _product_sums(tables: Sequence[np.ndarray]) -> np.ndarray:
    """Tensor of sum_i table_i over the product grid; result shape (G_1,...,G_N, k)."""
    n = len(tables)
    out = None
    for i, tab in enumerate(tables):
        shape = [1] * n + [tab.shape[1]]
        shape[i] = tab.shape[0]
        piece = tab.reshape(shape)
        out = piece if out is None else out + piece
    return out


def solve_reference(problem: ProblemInstance, cap: int = DEFAULT_TUPLE_CAP) -> ReferenceSolution:
    """Exhaustive search over the product grid for the constrained optimum.

    Keeps tuples with ||Ax - b|| <= 1e-9 and sum_i g_i <= 0, and returns
    the minimizer of sum_i f_i plus the certified slack
    xi = max over affine-feasible tuples of (-max_j sum_i g_{i,j}).
    """
    total = problem.n_tuples()
    if total > cap:
        raise InputError(
            f"product grid has {total} tuples, above the cap {cap}; use a coarser grid")
    f_sum = _product_sums([problem.objective_table(i)[:, None]
                           for i in range(problem.n_agents)])[..., 0]
    if problem.l > 0:
        aff = _product_sums([problem.affine_table(i) for i in range(problem.n_agents)])
        aff = aff - problem.b
        affine_ok = np.linalg.norm(aff, axis=-1) <= AFFINE_TOL
    else:
        affine_ok = np.ones(f_sum.shape, dtype=bool)
    xi = None
    if problem.m > 0:
        g_sum = _product_sums([problem.constraint_table(i) for i in range(problem.n_agents)])
        g_ok = np.all(g_sum <= 0, axis=-1)
        if affine_ok.any():
            slack = -np.max(g_sum, axis=-1)
            xi = float(np.max(slack[affine_ok]))
    else:
        g_ok = np.ones(f_sum.shape, dtype=bool)
    feasible = affine_ok & g_ok
    n_feasible = int(feasible.sum())
    if n_feasible == 0:
        raise InfeasibleError("no grid tuple satisfies both constraint families")
    masked = np.where(feasible, f_sum, np.inf)
    flat_idx = int(np.argmin(masked))
    idx = np.unravel_index(flat_idx, f_sum.shape)
    x_star = [problem.grids[i][idx[i]].copy() for i in range(problem.n_agents)]
    return ReferenceSolution(x_star=x_star, f_star=float(f_sum[idx]), xi=xi,
                             n_feasible=n_feasible)


def audit_feasibility(problem: ProblemInstance, cap: int = DEFAULT_TUPLE_CAP) -> ReferenceSolution:
    """Feasibility audit run on every constructed instance."""
    return solve_reference(problem, cap=cap)


# ---------------------------------------------------------------------------
# Instance constructors
# ---------------------------------------------------------------------------


def make_oscillation_example() -> ProblemInstance:
    """Single agent, single constraint, grid {-1, 0, 1}, noiseless.

    f = (1, 0.5, -1) and g = (-1, 0, 2) on the grid; the constrained
    optimum is x = 0 with value 0.5, yet any primal-dual trajectory with
    exact function knowledge oscillates between -1 and 1 and never
    samples it.
    """
    grid = np.array([[-1.0], [0.0], [1.0]])
    f = TabulatedFunction(grid, [1.0, 0.5, -1.0])
    g = TabulatedFunction(grid, [-1.0, 0.0, 2.0])
    C = np.array([[NORM_BOUND_INFLATION * f.max_abs(), NORM_BOUND_INFLATION * g.max_abs()]])
    problem = ProblemInstance(
        kind="oscillation",
        n_agents=1, m=1, l=0,
        grids=[grid],
        objectives=[f],
        constraints=[[g]],
        A=[], b=np.empty(0),
        C=C,
        sigma_noise=0.0,
        xi=1.0,
        optimum=([np.array([0.0])], 0.5),
    )
    audit_feasibility(problem)
    return problem


def make_gp_instance(n_agents: int, m: int, kernel: KernelSpec | None = None,
                     grid_size: int = 50, seed: int = 0, *,
                     sigma_noise: float = 0.02,
                     slack_target: float = 0.05,
                     objective_scale: float | None = None,
                     constraint_kernel: KernelSpec | None = None,
                     extra_shift: float = 0.0) -> ProblemInstance:
    """Synthetic instance with all functions drawn from a GP prior.

    Each agent's domain is a uniform grid of ``grid_size`` points on
    [-1, 1]. Constraints are shifted down (uniformly across agents, never
    touching the objectives) until some grid tuple has slack at least
    ``slack_target``; ``extra_shift`` adds headroom on top, which widens
    the certified slack for runs that need a comfortable margin.
    """
    if n_agents < 1 or m < 0:
        raise InputError("need n_agents >= 1 and m >= 0")
    if grid_size < 2:
        raise InputError("grid_size must be at least 2")
    kernel = kernel or KernelSpec(lengthscale=0.2)
    if objective_scale is not None:
        kernel = KernelSpec(kernel.family, kernel.lengthscale, objective_scale)
    g_kernel = constraint_kernel or kernel
    grid = np.linspace(-1.0, 1.0, grid_size)[:, None]
    grids = [grid.copy() for _ in range(n_agents)]

    objectives = [
        sample_prior_function(kernel, grid, (_SAMPLE_TAG, seed, i, 0))
        for i in range(n_agents)
    ]
    raw_constraints = [
        [sample_prior_function(g_kernel, grid, (_SAMPLE_TAG, seed, i, j + 1)) for j in range(m)]
        for i in range(n_agents)
    ]

    constraints = raw_constraints
    if m > 0:
        # Worst constraint value at the most feasible tuple decides the shift.
        tables = [np.column_stack([g.values for g in raw_constraints[i]])
                  for i in range(n_agents)]
        total = int(np.prod([grid_size] * n_agents))
        if total <= 1_000_000:
            g_sum = _product_sums(tables)
            best = float(np.min(np.max(g_sum, axis=-1)))
        else:
            # Certify at the tuple minimizing each agent's own worst constraint.
            rows = [int(np.argmin(np.max(t, axis=1))) for t in tables]
            best = float(np.max(sum(t[r] for t, r in zip(tables, rows))))
        shift = max(0.0, best + slack_target) + extra_shift
        per_agent = shift / n_agents
        constraints = [[g.shifted(-per_agent) for g in row] for row in raw_constraints]

    C = np.zeros((n_agents, m + 1))
    for i in range(n_agents):
        C[i, 0] = NORM_BOUND_INFLATION * objectives[i].max_abs()
        for j in range(m):
            C[i, j + 1] = NORM_BOUND_INFLATION * constraints[i][j].max_abs()

    problem = ProblemInstance(
        kind="gp",
        n_agents=n_agents, m=m, l=0,
        grids=grids,
        objectives=objectives,
        constraints=constraints,
        A=[], b=np.empty(0),
        C=C,
        sigma_noise=sigma_noise,
        meta={"seed": seed, "grid_size": grid_size,
              "model_kernel": {
                  "objective": {"family": kernel.family,
                                "lengthscale": kernel.lengthscale.tolist(),
                                "output_scale": kernel.output_scale},
                  "constraints": {"family": g_kernel.family,
                                  "lengthscale": g_kernel.lengthscale.tolist(),
                                  "output_scale": g_kernel.output_scale}}},
    )
    reference = audit_feasibility(problem)
    problem.xi = reference.xi
    if m > 0 and (reference.xi is None or reference.xi < slack_target - 1e-12):
        raise InfeasibleError(
            f"constraint shift failed to certify slack {slack_target} (got {reference.xi})")
    problem.optimum = (reference.x_star, reference.f_star)
    return problem


def make_power_allocation(n_agents: int, total_power: float,
                          p_bounds=(0.0, 1.0), grid_size: int = 21,
                          utility_seed: int = 0, *,
                          sigma_noise: float = 0.02,
                          xi: float | None = None) -> ProblemInstance:
    """Budgeted allocation: minimize -sum_i a_i ln(1 + b_i p_i) s.t. sum p_i = P.

    Utility coefficients are drawn once from ``utility_seed`` with
    a_i in [0.5, 2] and b_i in [0.5, 3]. Grids must admit a tuple summing
    exactly to the budget, which holds when the spacing divides
    P - sum_i p_min_i.
    """
    bounds = np.asarray(p_bounds, dtype=float)
    if bounds.ndim == 1:
        bounds = np.tile(bounds, (n_agents, 1))
    if bounds.shape != (n_agents, 2) or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise InputError("p_bounds must be [p_min, p_max] with p_min < p_max per agent")
    p_min, p_max = bounds[:, 0], bounds[:, 1]
    if not (p_min.sum() - 1e-12 <= total_power <= p_max.sum() + 1e-12):
        raise InputError(
            f"budget {total_power} outside [{p_min.sum()}, {p_max.sum()}] reachable by the bounds")

    rng = np.random.default_rng(np.random.SeedSequence((_SAMPLE_TAG, utility_seed)))
    a = rng.uniform(0.5, 2.0, size=n_agents)
    b_coef = rng.uniform(0.5, 3.0, size=n_agents)
    grids = [np.linspace(p_min[i], p_max[i], grid_size)[:, None] for i in range(n_agents)]

    objectives = [NegLogUtility(a[i], b_coef[i]) for i in range(n_agents)]
    C = np.array([[NORM_BOUND_INFLATION * float(np.max(np.abs(objectives[i].values_on(grids[i]))))]
                  for i in range(n_agents)])

    # Interior-ball radius certified at the affine-feasible tuple farthest
    # from the box boundary (used only through rho in the constant schedule).
    sums = _product_sums([g for g in grids])[..., 0]
    exact = np.abs(sums - total_power) <= AFFINE_TOL
    if not exact.any():
        h = (p_max[0] - p_min[0]) / (grid_size - 1)
        span = total_power - p_min.sum()
        steps = max(1, round(span / h))
        raise InfeasibleError(
            f"no grid tuple sums to {total_power}; try spacing {span / steps:.6g} "
            f"(grid_size {round((p_max[0] - p_min[0]) / (span / steps)) + 1})")
    mins = None
    for i, g in enumerate(grids):
        shape = [1] * n_agents
        shape[i] = g.shape[0]
        margin_i = np.minimum(g[:, 0] - p_min[i], p_max[i] - g[:, 0]).reshape(shape)
        mins = margin_i if mins is None else np.minimum(mins, margin_i)
    tilde_rho = float(np.max(np.where(exact, mins, -np.inf)))
    if tilde_rho <= 0:
        tilde_rho = None

    problem = ProblemInstance(
        kind="power",
        n_agents=n_agents, m=0, l=1,
        grids=grids,
        objectives=objectives,
        constraints=[[] for _ in range(n_agents)],
        A=[np.array([[1.0]]) for _ in range(n_agents)],
        b=np.array([total_power]),
        C=C,
        sigma_noise=sigma_noise,
        xi=xi,
        tilde_rho=tilde_rho,
        meta={"utility_seed": utility_seed, "a": a.tolist(), "b_coef": b_coef.tolist(),
              "total_power": total_power},
    )
    reference = audit_feasibility(problem)
    problem.optimum = (reference.x_star, reference.f_star)
    return problem


# ---------------------------------------------------------------------------
# Instance file round-trip (replayable runs)
# ---------------------------------------------------------------------------


def _function_from_json(blob: dict, grid: np.ndarray):
    if blob["type"] == "table":
        return TabulatedFunction(grid, blob["values"])
    if blob["type"] == "log_utility":
        return NegLogUtility(blob["a"], blob["b"])
    raise InputError(f"unknown function type {blob['type']!r} in instance file")


def instance_to_json(problem: ProblemInstance) -> dict:
    agents = []
    for i in range(problem.n_agents):
        fn = problem.objectives[i]
        blob = fn.to_json() if hasattr(fn, "to_json") else {
            "type": "table", "values": problem.objective_table(i).tolist()}
        agents.append({
            "grid": problem.grids[i].tolist(),
            "objective": blob,
            "constraints": [g.to_json() if hasattr(g, "to_json") else
                            {"type": "table", "values": _values_on(g, problem.grids[i]).tolist()}
                            for g in problem.constraints[i]],
            "A": problem.A[i].tolist() if problem.l > 0 else [],
            "C": problem.C[i].tolist(),
        })
    return {
        "kind": problem.kind,
        "n_agents": problem.n_agents,
        "m": problem.m,
        "l": problem.l,
        "sigma_noise": problem.sigma_noise,
        "xi": problem.xi,
        "tilde_rho": problem.tilde_rho,
        "b": problem.b.tolist(),
        "agents": agents,
        "optimum": None if problem.optimum is None else {
            "x": [x.tolist() for x in problem.optimum[0]],
            "f": problem.optimum[1],
        },
        "meta": problem.meta,
    }


def instance_from_json(blob: dict) -> ProblemInstance:
    grids = [_as_points(a["grid"]) for a in blob["agents"]]
    objectives = [_function_from_json(a["objective"], grids[i])
                  for i, a in enumerate(blob["agents"])]
    constraints = [[_function_from_json(g, grids[i]) for g in a["constraints"]]
                   for i, a in enumerate(blob["agents"])]
    optimum = None
    if blob.get("optimum"):
        optimum = ([np.asarray(x, dtype=float) for x in blob["optimum"]["x"]],
                   float(blob["optimum"]["f"]))
    return ProblemInstance(
        kind=blob["kind"],
        n_agents=blob["n_agents"],
        m=blob["m"],
        l=blob["l"],
        grids=grids,
        objectives=objectives,
        constraints=constraints,
        A=[np.asarray(a["A"], dtype=float) for a in blob["agents"]] if blob["l"] > 0 else [],
        b=np.asarray(blob["b"], dtype=float),
        C=np.asarray([a["C"] for a in blob["agents"]], dtype=float),
        sigma_noise=blob["sigma_noise"],
        xi=blob.get("xi"),
        tilde_rho=blob.get("tilde_rho"),
        optimum=optimum,
        meta=blob.get("meta", {}),
    )


def save_instance(problem: ProblemInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json(problem), fh, indent=1)


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))
