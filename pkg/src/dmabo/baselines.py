"""Comparison methods: distributed simultaneous CEI and penalty coordination.

Both baselines consume exactly the same per-(agent, output) noise streams
as the main loop under the same seed, so comparisons are paired. They
also emit the same trace type, with zeroed dual columns.

DCEI: every agent simultaneously maximizes expected improvement times the
probability of feasibility, treating the other agents' contributions to
the coupled constraints as the constant given by their last-round
constraint lower bounds (the minimal-information reading of a
simultaneous distributed extension).

Penalty: every agent maximizes EI minus Q * ||x - target||^2, where the
targets come from projecting the last-round decisions onto the budget
hyperplane (uniform correction, clipped to bounds).
"""

from __future__ import annotations

import time

import numpy as np
from scipy.special import ndtr

from .algorithm import AlgoConfig, _run_kernel
from .confidence import CONSTANT, BoundParams, beta, bounds_from_moments
from .errors import InputError
from .gp import GPPosterior
from .metrics import RunTrace
from .problems import ProblemInstance
from .sim import evaluate

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def expected_improvement(post: GPPosterior, incumbent: float, x) -> float:
    """EI for minimization at a single point; exact in the sigma -> 0 limit."""
    mean, var = post.predict(x)
    return float(_ei_values(np.array([mean]), np.array([var]), incumbent)[0])


def _ei_values(means: np.ndarray, variances: np.ndarray, incumbent: float) -> np.ndarray:
    std = np.sqrt(variances)
    gap = incumbent - means
    out = np.maximum(gap, 0.0)
    pos = std > 0
    z = gap[pos] / std[pos]
    out[pos] = gap[pos] * ndtr(z) + std[pos] * np.exp(-0.5 * z * z) / _SQRT_2PI
    return out


def _feasibility_prob(means: np.ndarray, variances: np.ndarray,
                      threshold: float) -> np.ndarray:
    """P(g(x) <= threshold) under the posterior; degenerates to an indicator."""
    std = np.sqrt(variances)
    out = np.where(means <= threshold, 1.0, 0.0)
    pos = std > 0
    out[pos] = ndtr((threshold - means[pos]) / std[pos])
    return out


def cei_step(f_moments, g_moments, thresholds, incumbent) -> int:
    """Index of the grid point maximizing EI times feasibility probability.

    ``g_moments`` is a list of (means, variances) per constraint with
    matching per-constraint thresholds; with no feasible incumbent the
    acquisition falls back to the feasibility probability alone. Ties
    break to the lowest grid index.
    """
    f_means, f_vars = f_moments
    prob = np.ones_like(f_means)
    for (g_means, g_vars), thr in zip(g_moments, thresholds):
        prob *= _feasibility_prob(g_means, g_vars, thr)
    if incumbent is None:
        acq = prob
    else:
        acq = _ei_values(f_means, f_vars, incumbent) * prob
    return int(np.argmax(acq))


def penalty_step(f_moments, grid: np.ndarray, target: np.ndarray,
                 Q: float, incumbent) -> int:
    """Index maximizing EI - Q * ||x - target||^2 over the grid."""
    f_means, f_vars = f_moments
    if incumbent is None:
        acq = -f_means.copy()
    else:
        acq = _ei_values(f_means, f_vars, incumbent)
    if Q > 0:
        acq = acq - Q * np.sum((grid - target) ** 2, axis=1)
    return int(np.argmax(acq))


def _baseline_scaffold(problem: ProblemInstance, config: AlgoConfig, seed: int):
    N, m = problem.n_agents, problem.m
    oracles = problem.make_oracles(seed)
    posteriors = [[GPPosterior(_run_kernel(problem, i, j), config.model_noise,
                               grid=problem.grids[i])
                   for j in range(m + 1)] for i in range(N)]
    params = [[BoundParams(C=float(problem.C[i, j]), sigma_noise=problem.sigma_noise,
                           delta=config.delta, n_agents=N, n_constraints=m,
                           mode=config.beta_mode,
                           value=config.beta_value if config.beta_mode == CONSTANT else None)
               for j in range(m + 1)] for i in range(N)]
    return oracles, posteriors, params


def _allocate(problem: ProblemInstance, T: int):
    N, m, l = problem.n_agents, problem.m, problem.l
    return dict(
        xs=[np.empty((T, problem.grids[i].shape[1])) for i in range(N)],
        f_true=np.empty((T, N)), g_true=np.empty((T, N, m)),
        y_f=np.empty((T, N)), y_g=np.empty((T, N, m)),
        lam=np.zeros((T, m)), mu=np.zeros((T, l)),
        residuals=np.empty((T, l)), wall=np.empty(T),
    )


def _finish_trace(problem, method, seed, T, buf, posteriors) -> RunTrace:
    N, m, l = problem.n_agents, problem.m, problem.l
    gains = np.array([[posteriors[i][j].info_gain for j in range(m + 1)] for i in range(N)])
    return RunTrace(
        method=method, seed=seed, n_agents=N, m=m, l=l, T=T,
        xs=buf["xs"], f_true=buf["f_true"], g_true=buf["g_true"],
        y_f=buf["y_f"], y_g=buf["y_g"],
        lam=buf["lam"], mu=buf["mu"], lam0=np.zeros(m), mu0=np.zeros(l),
        affine_residual=buf["residuals"], eps_used=np.zeros(T), wall_time=buf["wall"],
        info_gain_final=gains,
    )


def run_dcei(problem: ProblemInstance, config: AlgoConfig, seed: int) -> RunTrace:
    """Distributed simultaneous constrained EI; first round takes grid centers."""
    N, m = problem.n_agents, problem.m
    if config.T == 0:
        from .algorithm import _empty_trace
        return _empty_trace(problem, "dcei", seed, np.zeros(m), np.zeros(problem.l))
    oracles, posteriors, params = _baseline_scaffold(problem, config, seed)
    grids = problem.grids
    true_f = [problem.objective_table(i) for i in range(N)]
    true_g = [problem.constraint_table(i) for i in range(N)]
    affine = [problem.affine_table(i) for i in range(N)]
    buf = _allocate(problem, config.T)

    last_idx = [g.shape[0] // 2 for g in grids]
    obs_f = [[] for _ in range(N)]      # observed objective values per agent
    obs_g = [[] for _ in range(N)]      # observed constraint vectors per agent

    for t in range(config.T):
        tic = time.perf_counter()
        moments = [[posteriors[i][j].predict_grid() for j in range(m + 1)] for i in range(N)]
        if t == 0:
            idxs = list(last_idx)
        else:
            # Constant offsets: other agents' last-round constraint lcb values.
            lcb_at_last = np.zeros((N, m))
            for i in range(N):
                for j in range(m):
                    b_ij = beta(params[i][j + 1], posteriors[i][j + 1].info_gain)
                    means, variances = moments[i][j + 1]
                    low, _ = bounds_from_moments(means, variances, b_ij,
                                                 problem.C[i, j + 1])
                    lcb_at_last[i, j] = low[last_idx[i]]
            idxs = []
            for i in range(N):
                thresholds = [-(lcb_at_last[:, j].sum() - lcb_at_last[i, j])
                              for j in range(m)]
                incumbent = _incumbent(obs_f[i], obs_g[i], thresholds)
                idxs.append(cei_step(moments[i][0],
                                     [moments[i][j + 1] for j in range(m)],
                                     thresholds, incumbent))
        for i in range(N):
            x = grids[i][idxs[i]]
            buf["xs"][i][t] = x
            buf["f_true"][t, i] = true_f[i][idxs[i]]
            buf["g_true"][t, i] = true_g[i][idxs[i]]
            y_f, y_g = evaluate(oracles[i], x)
            buf["y_f"][t, i] = y_f
            buf["y_g"][t, i] = y_g
            obs_f[i].append(y_f)
            obs_g[i].append(y_g)
            for j in range(m + 1):
                y = y_f if j == 0 else y_g[j - 1]
                posteriors[i][j] = posteriors[i][j].update(x, y)
        buf["residuals"][t] = sum(affine[i][idxs[i]] for i in range(N)) - problem.b
        last_idx = idxs
        buf["wall"][t] = time.perf_counter() - tic
    return _finish_trace(problem, "dcei", seed, config.T, buf, posteriors)


def _incumbent(obs_f: list, obs_g: list, thresholds) -> float | None:
    """Best observed objective among observations meeting the thresholds."""
    if not obs_f:
        return None
    best = None
    for y_f, y_g in zip(obs_f, obs_g):
        if all(y_g[j] <= thresholds[j] for j in range(len(thresholds))):
            best = y_f if best is None else min(best, y_f)
    return best


def run_penalty(problem: ProblemInstance, config: AlgoConfig, seed: int,
                Q: float = 5.0) -> RunTrace:
    """EI penalized toward coordinator targets on the budget hyperplane.

    Defined for scalar decisions with a single total-budget constraint
    (A_i = [1], one affine row) or for instances with no affine
    constraint, in which case the projection step is a no-op.
    """
    if Q < 0:
        raise InputError("penalty weight Q must be nonnegative")
    N, m = problem.n_agents, problem.m
    if problem.l > 0:
        if problem.l != 1 or any(g.shape[1] != 1 for g in problem.grids) or any(
                not np.allclose(a, [[1.0]]) for a in problem.A):
            raise InputError("penalty coordination expects scalar decisions with sum(p) = P")
    if config.T == 0:
        from .algorithm import _empty_trace
        return _empty_trace(problem, "penalty", seed, np.zeros(m), np.zeros(problem.l))
    oracles, posteriors, params = _baseline_scaffold(problem, config, seed)
    grids = problem.grids
    true_f = [problem.objective_table(i) for i in range(N)]
    true_g = [problem.constraint_table(i) for i in range(N)]
    affine = [problem.affine_table(i) for i in range(N)]
    buf = _allocate(problem, config.T)

    lo = np.array([g[:, 0].min() for g in grids])
    hi = np.array([g[:, 0].max() for g in grids])
    last = np.array([grids[i][grids[i].shape[0] // 2, 0] for i in range(N)])
    obs_f = [[] for _ in range(N)]

    for t in range(config.T):
        tic = time.perf_counter()
        moments = [posteriors[i][0].predict_grid() for i in range(N)]
        if t == 0:
            idxs = [g.shape[0] // 2 for g in grids]
        else:
            if problem.l > 0:
                correction = (last.sum() - problem.b[0]) / N
                targets = np.clip(last - correction, lo, hi)
            else:
                targets = last
            idxs = []
            for i in range(N):
                incumbent = min(obs_f[i]) if obs_f[i] else None
                idxs.append(penalty_step(moments[i], grids[i],
                                         np.array([targets[i]]), Q, incumbent))
        for i in range(N):
            x = grids[i][idxs[i]]
            buf["xs"][i][t] = x
            buf["f_true"][t, i] = true_f[i][idxs[i]]
            buf["g_true"][t, i] = true_g[i][idxs[i]]
            y_f, y_g = evaluate(oracles[i], x)
            buf["y_f"][t, i] = y_f
            buf["y_g"][t, i] = y_g
            obs_f[i].append(y_f)
            posteriors[i][0] = posteriors[i][0].update(x, y_f)
            for j in range(m):
                posteriors[i][j + 1] = posteriors[i][j + 1].update(x, y_g[j])
        buf["residuals"][t] = sum(affine[i][idxs[i]] for i in range(N)) - problem.b
        last = np.array([grids[i][idxs[i], 0] for i in range(N)])
        buf["wall"][t] = time.perf_counter() - tic
    return _finish_trace(problem, "penalty", seed, config.T, buf, posteriors)


def run_method(problem: ProblemInstance, method: str, config: AlgoConfig,
               seed: int, Q: float = 5.0) -> RunTrace:
    """Dispatch a named method; the main loop lives in ``algorithm``."""
    from .algorithm import run_dmabo
    if method == "dmabo":
        return run_dmabo(problem, config, seed)
    if method == "dcei":
        return run_dcei(problem, config, seed)
    if method == "penalty":
        return run_penalty(problem, config, seed, Q=Q)
    raise InputError(f"unknown method {method!r}")
