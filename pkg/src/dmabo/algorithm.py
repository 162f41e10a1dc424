"""Primal-dual multi-agent optimization loop and its constant schedule.

Each round, every agent minimizes an optimistic local Lagrangian

    lcb_f_i(x) + eta * lam^T lcb_g_i(x) + eta * mu^T A_i x

over its own grid; a coordinator then performs the global dual ascent
step on the summed constraint lower bounds (with pessimistic drift eps)
and the affine residual. The rounds are strictly sequential; within a
round the agents are independent.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, replace

import numpy as np

from .confidence import BoundParams, CONSTANT, THEORETICAL, beta, bounds_from_moments
from .duals import DualState
from .errors import InputError, NumericalError
from .gp import GPPosterior
from .metrics import RunTrace
from .problems import ProblemInstance
from .sim import AgentReport, coordinator_round, evaluate

B_ENUMERATION_CAP = 1_000_000


@dataclass(eq=False)
class AlgoConfig:
    """Knobs of one run; defaults are the practical settings.

    ``beta_mode="constant"`` with value 3 and model noise 0.02^2 work well
    when the kernel fits the functions; the theoretical schedule switches
    every piece to its analysis-driven form.
    """

    T: int
    delta: float = 0.1
    beta_mode: str = CONSTANT          # "constant" | "theoretical"
    beta_value: float = 3.0
    model_noise: float = 0.02 ** 2
    eta: float | None = None           # None -> 1/sqrt(T)
    eps_mode: str = "manual"           # "manual" | "eps1" | "eps2"
    eps_value: float = 0.0
    bounds_mode: str = "gp"            # "gp" | "exact" (true function values)
    dual_init: str = "zero"            # "zero" | "theory" (lam1 = sqrt(H1/div) e)
    lambda1_divisor: str = "m"         # "m" | "N"
    lambda1: np.ndarray | None = None  # explicit overrides win over dual_init
    mu1: np.ndarray | None = None

    def __post_init__(self):
        if self.T < 0:
            raise InputError("T must be nonnegative")
        if self.beta_mode not in (CONSTANT, THEORETICAL):
            raise InputError(f"unknown beta_mode {self.beta_mode!r}")
        if self.eps_mode not in ("manual", "eps1", "eps2"):
            raise InputError(f"unknown eps_mode {self.eps_mode!r}")
        if self.bounds_mode not in ("gp", "exact"):
            raise InputError(f"unknown bounds_mode {self.bounds_mode!r}")
        if self.dual_init not in ("zero", "theory"):
            raise InputError(f"unknown dual_init {self.dual_init!r}")
        if self.lambda1_divisor not in ("m", "N"):
            raise InputError("lambda1_divisor must be 'm' or 'N'")

    def resolved_eta(self) -> float:
        if self.eta is not None:
            return self.eta
        if self.T == 0:
            return 1.0
        return 1.0 / np.sqrt(self.T)


def primal_update(lcb_f: np.ndarray, lcb_g: np.ndarray, A_i: np.ndarray | None,
                  dual: DualState, grid: np.ndarray) -> int:
    """Index of the grid point minimizing the optimistic local Lagrangian.

    Ties break to the lowest grid index (np.argmin's first minimum).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.shape[0] == 0:
        raise InputError("grid must be nonempty")
    objective = np.asarray(lcb_f, dtype=float).copy()
    if dual.lam.size:
        objective += dual.eta * (np.asarray(lcb_g, dtype=float) @ dual.lam)
    if dual.mu.size:
        if A_i is None:
            raise InputError("A_i required when affine duals are present")
        objective += dual.eta * ((grid @ np.asarray(A_i, dtype=float).T) @ dual.mu)
    return int(np.argmin(objective))


def rho_from_affine(A: np.ndarray, tilde_rho: float) -> float:
    """Radius of the infinity-norm ball covered by the affine image.

    Picks the first (in column order) set of l linearly independent
    columns A_l, maximizes ||A_l^{-1} y|| exactly over the 2^l sign
    vertices of the unit cube, and returns tilde_rho / that norm.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InputError("A must be a matrix")
    l, n = A.shape
    if tilde_rho <= 0:
        raise InputError("tilde_rho must be positive")
    if np.linalg.matrix_rank(A) < l:
        raise InputError("A is rank-deficient; drop redundant affine rows and retry")
    cols: list[int] = []
    for j in range(n):
        trial = A[:, cols + [j]]
        if np.linalg.matrix_rank(trial) > len(cols):
            cols.append(j)
        if len(cols) == l:
            break
    A_l = A[:, cols]
    A_l_inv = np.linalg.inv(A_l)
    norm = max(np.linalg.norm(A_l_inv @ np.array(signs, dtype=float))
               for signs in itertools.product((-1.0, 1.0), repeat=l))
    return tilde_rho / norm


@dataclass(eq=False)
class ConstantSchedule:
    """All run constants derived from the instance at a given horizon."""

    T: int
    eta: float
    C0: float
    C_vec: np.ndarray          # (m,) totals over agents
    norm_C_sq: float           # ||C||^2 = sum_j C_j^2
    B: float                   # max_x ||Ax - b||
    B_exact: bool
    rho: float | None
    xi: float | None
    H1: float
    H2: float
    lambda1: np.ndarray
    mu1: np.ndarray

    def dual_cap(self) -> float:
        """Bound on the dual potential: H1 + H2 + 2 C0/eta + 2||C||^2 + B^2."""
        return self.H1 + self.H2 + 2.0 * self.C0 / self.eta + 2.0 * self.norm_C_sq + self.B ** 2

    def eps2(self) -> float:
        return np.sqrt(2.0 * self.dual_cap()) / self.T

    def eps1(self, beta_mat: np.ndarray | None = None,
             gamma_mat: np.ndarray | None = None) -> float:
        """eps2 plus the learning term 8 sum_i ||beta_i|| sqrt(T ||gamma_i||).

        beta_mat/gamma_mat are (N, m) over the constraint outputs; passing
        None (or m = 0) drops the learning term.
        """
        extra = 0.0
        if beta_mat is not None and gamma_mat is not None and beta_mat.size:
            beta_norms = np.linalg.norm(np.asarray(beta_mat, dtype=float), axis=1)
            gamma_norms = np.linalg.norm(np.asarray(gamma_mat, dtype=float), axis=1)
            extra = 8.0 * float(beta_norms @ np.sqrt(self.T * gamma_norms)) / self.T
        return self.eps2() + extra

    def eps_ok(self, eps: float) -> bool:
        """Whether eps clears min(xi / 2, min_j C_j), the schedule's premise."""
        limit = np.inf
        if self.xi is not None:
            limit = self.xi / 2.0
        if self.C_vec.size:
            limit = min(limit, float(self.C_vec.min()))
        return eps <= limit


def compute_constants(problem: ProblemInstance, T: int, delta: float = 0.1,
                      lambda1_divisor: str = "m") -> ConstantSchedule:
    """Assemble the constant schedule for a horizon-T run on the instance.

    B comes from exact product-grid enumeration up to 10^6 tuples and
    falls back to the flagged upper bound sum_i max ||A_i x_i|| + ||b||.
    With no affine constraint, B = 0, rho is undefined and H2 = 0; with no
    black-box constraint, H1 = 0 and lambda1 is empty.
    """
    if T < 1:
        raise InputError("constant schedule needs T >= 1")
    eta = 1.0 / np.sqrt(T)
    C_totals = problem.c_totals()
    C0 = float(C_totals[0])
    C_vec = C_totals[1:].copy()
    norm_C_sq = float(C_vec @ C_vec)

    if problem.l > 0:
        if problem.n_tuples() <= B_ENUMERATION_CAP:
            from .errors import InfeasibleError
            from .problems import _product_sums
            aff = _product_sums([problem.affine_table(i) for i in range(problem.n_agents)])
            norms = np.linalg.norm(aff - problem.b, axis=-1)
            if norms.min() > 1e-9:
                raise InfeasibleError("no grid tuple satisfies the affine system Ax = b")
            B = float(np.max(norms))
            B_exact = True
        else:
            B = float(sum(np.max(np.linalg.norm(problem.affine_table(i), axis=1))
                          for i in range(problem.n_agents)) + np.linalg.norm(problem.b))
            B_exact = False
        if problem.tilde_rho is None:
            raise InputError("instance with affine constraints must provide tilde_rho")
        A_full = np.hstack(problem.A)
        rho = rho_from_affine(A_full, problem.tilde_rho)
        sqrt_m = np.sqrt(problem.m)
        H2 = (4.0 * C0 ** 2 / (rho ** 2 * eta ** 2) * (1.0 + sqrt_m) ** 2
              + (1.0 + sqrt_m) ** 2 / rho ** 2 * (2.0 * norm_C_sq + B ** 2) ** 2)
    else:
        B = 0.0
        B_exact = True
        rho = None
        H2 = 0.0

    if problem.m > 0:
        if problem.xi is None or problem.xi <= 0:
            raise InputError("instance with black-box constraints must certify xi > 0")
        H1 = 0.5 * (4.0 * C0 / (eta * problem.xi)
                    + (4.0 * norm_C_sq + 2.0 * B ** 2) / problem.xi) ** 2
        divisor = problem.m if lambda1_divisor == "m" else problem.n_agents
        lambda1 = np.full(problem.m, np.sqrt(H1 / divisor))
    else:
        H1 = 0.0
        lambda1 = np.empty(0)

    return ConstantSchedule(
        T=T, eta=eta, C0=C0, C_vec=C_vec, norm_C_sq=norm_C_sq,
        B=B, B_exact=B_exact, rho=rho, xi=problem.xi,
        H1=H1, H2=H2, lambda1=lambda1, mu1=np.zeros(problem.l),
    )


def _empty_trace(problem: ProblemInstance, method: str, seed: int,
                 lam0: np.ndarray, mu0: np.ndarray) -> RunTrace:
    N, m, l = problem.n_agents, problem.m, problem.l
    return RunTrace(
        method=method, seed=seed, n_agents=N, m=m, l=l, T=0,
        xs=[np.empty((0, problem.grids[i].shape[1])) for i in range(N)],
        f_true=np.empty((0, N)), g_true=np.empty((0, N, m)),
        y_f=np.empty((0, N)), y_g=np.empty((0, N, m)),
        lam=np.empty((0, m)), mu=np.empty((0, l)),
        lam0=lam0, mu0=mu0,
        affine_residual=np.empty((0, l)),
        eps_used=np.empty(0), wall_time=np.empty(0),
    )


def run_dmabo(problem: ProblemInstance, config: AlgoConfig, seed: int) -> RunTrace:
    """Execute T rounds of the primal-dual loop; deterministic given seed."""
    N, m, l = problem.n_agents, problem.m, problem.l
    eta = config.resolved_eta()

    needs_constants = (config.eps_mode in ("eps1", "eps2")) or config.dual_init == "theory"
    constants = None
    if needs_constants and config.T >= 1:
        constants = compute_constants(problem, config.T, config.delta,
                                      lambda1_divisor=config.lambda1_divisor)
        eta = constants.eta if config.eta is None else eta

    if config.lambda1 is not None:
        lam0 = np.asarray(config.lambda1, dtype=float).reshape(-1)
    elif config.dual_init == "theory" and constants is not None:
        lam0 = constants.lambda1.copy()
    else:
        lam0 = np.zeros(m)
    if config.mu1 is not None:
        mu0 = np.asarray(config.mu1, dtype=float).reshape(-1)
    else:
        mu0 = np.zeros(l)
    if lam0.shape != (m,) or mu0.shape != (l,):
        raise InputError("dual initialization has wrong dimensions")

    if config.T == 0:
        return _empty_trace(problem, "dmabo", seed, lam0, mu0)

    oracles = problem.make_oracles(seed)
    grids = problem.grids
    gp_mode = config.bounds_mode == "gp"
    sigma = problem.sigma_noise

    if gp_mode:
        posteriors = [[GPPosterior(_run_kernel(problem, i, j), config.model_noise, grid=grids[i])
                       for j in range(m + 1)] for i in range(N)]
        bound_params = [[BoundParams(C=float(problem.C[i, j]), sigma_noise=sigma,
                                     delta=config.delta, n_agents=N, n_constraints=m,
                                     mode=config.beta_mode, value=config.beta_value
                                     if config.beta_mode == CONSTANT else None)
                         for j in range(m + 1)] for i in range(N)]
    else:
        f_tables = [problem.objective_table(i) for i in range(N)]
        g_tables = [problem.constraint_table(i) for i in range(N)]

    true_f_tables = [problem.objective_table(i) for i in range(N)]
    true_g_tables = [problem.constraint_table(i) for i in range(N)]
    affine_tables = [problem.affine_table(i) for i in range(N)]

    xs = [np.empty((config.T, grids[i].shape[1])) for i in range(N)]
    f_true = np.empty((config.T, N))
    g_true = np.empty((config.T, N, m))
    y_f_arr = np.empty((config.T, N))
    y_g_arr = np.empty((config.T, N, m))
    lam_hist = np.empty((config.T, m))
    mu_hist = np.empty((config.T, l))
    residuals = np.empty((config.T, l))
    eps_hist = np.empty(config.T)
    wall = np.empty(config.T)
    sigma_pre = np.empty((config.T, N, m + 1)) if gp_mode else None
    report_lcb_g = np.empty((config.T, N, m))
    report_affine = np.empty((config.T, N, l))

    dual = DualState(lam=lam0.copy(), mu=mu0.copy(), eta=eta, epsilon=0.0)

    for t in range(config.T):
        tic = time.perf_counter()
        # Confidence state per (agent, output) before this round's samples.
        if gp_mode:
            betas = np.array([[beta(bound_params[i][j], posteriors[i][j].info_gain)
                               for j in range(m + 1)] for i in range(N)])
            moments = [[posteriors[i][j].predict_grid() for j in range(m + 1)] for i in range(N)]
            lcb_f_list, lcb_g_list = [], []
            for i in range(N):
                lf, _ = bounds_from_moments(*moments[i][0], betas[i, 0], problem.C[i, 0])
                lcb_f_list.append(lf)
                if m:
                    lg = np.column_stack([
                        bounds_from_moments(*moments[i][j + 1], betas[i, j + 1],
                                            problem.C[i, j + 1])[0]
                        for j in range(m)])
                else:
                    lg = np.zeros((grids[i].shape[0], 0))
                lcb_g_list.append(lg)
        else:
            lcb_f_list = f_tables
            lcb_g_list = g_tables

        if config.eps_mode == "manual":
            eps_t = config.eps_value
        elif config.eps_mode == "eps2":
            eps_t = constants.eps2()
        else:  # eps1 with the running-gamma instantiation
            if gp_mode and m > 0:
                beta_mat = betas[:, 1:]
                gamma_mat = np.array([[posteriors[i][j + 1].info_gain for j in range(m)]
                                      for i in range(N)])
            else:
                beta_mat = gamma_mat = None
            eps_t = constants.eps1(beta_mat, gamma_mat)
        dual = replace(dual, epsilon=eps_t)

        # Local primal updates (independent across agents).
        idxs = [primal_update(lcb_f_list[i], lcb_g_list[i],
                              problem.A[i] if l > 0 else None, dual, grids[i])
                for i in range(N)]

        # Local evaluations and reports; the coordinator reduces them.
        reports = []
        for i in range(N):
            x = grids[i][idxs[i]]
            xs[i][t] = x
            f_true[t, i] = true_f_tables[i][idxs[i]]
            g_true[t, i] = true_g_tables[i][idxs[i]]
            y_f, y_g = evaluate(oracles[i], x)
            y_f_arr[t, i] = y_f
            y_g_arr[t, i] = y_g
            reports.append(AgentReport(agent_id=i,
                                       affine=affine_tables[i][idxs[i]],
                                       lcb_g=lcb_g_list[i][idxs[i]]))
            report_lcb_g[t, i] = reports[-1].lcb_g
            report_affine[t, i] = reports[-1].affine
        dual = coordinator_round(reports, dual, problem.b, N)
        lam_hist[t] = dual.lam
        mu_hist[t] = dual.mu
        # Same summation order as the coordinator, so the accumulated
        # residual matches mu exactly, not just to rounding.
        residuals[t] = sum((r.affine for r in reports), start=-problem.b)
        eps_hist[t] = eps_t

        # Posterior updates with the new data.
        if gp_mode:
            for i in range(N):
                x = grids[i][idxs[i]]
                ys = [y_f_arr[t, i]] + list(y_g_arr[t, i])
                for j in range(m + 1):
                    var_pre = moments[i][j][1][idxs[i]]
                    sigma_pre[t, i, j] = np.sqrt(var_pre)
                    try:
                        posteriors[i][j] = posteriors[i][j].update(grids[i][idxs[i]], ys[j])
                    except NumericalError as exc:
                        raise NumericalError(
                            f"round {t + 1}, agent {i}, output {j}: {exc}") from exc
        wall[t] = time.perf_counter() - tic

    gains = None
    if gp_mode:
        gains = np.array([[posteriors[i][j].info_gain for j in range(m + 1)]
                          for i in range(N)])

    return RunTrace(
        method="dmabo", seed=seed, n_agents=N, m=m, l=l, T=config.T,
        xs=xs, f_true=f_true, g_true=g_true, y_f=y_f_arr, y_g=y_g_arr,
        lam=lam_hist, mu=mu_hist, lam0=lam0, mu0=mu0,
        affine_residual=residuals, eps_used=eps_hist, wall_time=wall,
        sigma_pre=sigma_pre, info_gain_final=gains,
        report_lcb_g=report_lcb_g, report_affine=report_affine,
    )


def _run_kernel(problem: ProblemInstance, agent: int = 0, output: int = 0) -> "KernelSpec":
    """Kernel used for surrogate modeling of an instance's functions.

    Instances may carry the spec in meta["model_kernel"]: one dict for
    everybody, a list with one entry per agent, or a split
    {"objective": ..., "constraints": ...}. Agents default to identical
    specs.
    """
    from .kernels import KernelSpec
    spec = problem.meta.get("model_kernel")
    if isinstance(spec, list):
        spec = spec[agent]
    if isinstance(spec, dict) and ("objective" in spec or "constraints" in spec):
        spec = spec["objective"] if output == 0 else spec["constraints"]
    if isinstance(spec, KernelSpec):
        return spec
    if isinstance(spec, dict):
        return KernelSpec(spec.get("family", "squared-exponential"),
                          spec.get("lengthscale", 0.2),
                          spec.get("output_scale", 1.0))
    return KernelSpec(lengthscale=0.2)
