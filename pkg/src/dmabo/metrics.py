"""Run traces and the cumulative performance metrics computed from them.

Ground-truth columns exist for scoring only and are never fed back into
any algorithm. Metric conventions: regret sums objective gaps against the
constrained optimum and may go negative; violation takes the positive
part after summing (cancellation allowed); the strong variant takes
positive parts per round first (no cancellation); shift is the norm of
the accumulated affine residuals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

CSV_FLOAT_FMT = "%.17g"


@dataclass(eq=False)
class RunTrace:
    method: str
    seed: int
    n_agents: int
    m: int
    l: int
    T: int
    xs: list[np.ndarray]               # per agent, (T, n_i) chosen points
    f_true: np.ndarray                 # (T, N) ground truth, scoring only
    g_true: np.ndarray                 # (T, N, m) ground truth, scoring only
    y_f: np.ndarray                    # (T, N) observed
    y_g: np.ndarray                    # (T, N, m) observed
    lam: np.ndarray                    # (T, m) dual after each round's update
    mu: np.ndarray                     # (T, l)
    lam0: np.ndarray                   # (m,) initial dual
    mu0: np.ndarray                    # (l,)
    affine_residual: np.ndarray        # (T, l) sum_i A_i x_i^t - b
    eps_used: np.ndarray               # (T,) drift applied each round
    wall_time: np.ndarray              # (T,) seconds per round
    sigma_pre: np.ndarray | None = None      # (T, N, m+1) pre-update posterior std
    info_gain_final: np.ndarray | None = None  # (N, m+1) running gain at the end
    report_lcb_g: np.ndarray | None = None   # (T, N, m) coordinator message audit
    report_affine: np.ndarray | None = None  # (T, N, l)

    def g_round(self) -> np.ndarray:
        """(T, m) coupled constraint value sum_i g_i(x_i^t) per round."""
        return self.g_true.sum(axis=1)

    def f_round(self) -> np.ndarray:
        """(T,) objective value sum_i f_i(x_i^t) per round."""
        return self.f_true.sum(axis=1)

    def final_dual(self) -> tuple[np.ndarray, np.ndarray]:
        if self.T == 0:
            return self.lam0.copy(), self.mu0.copy()
        return self.lam[-1].copy(), self.mu[-1].copy()


def regret_trace(trace: RunTrace, f_star: float) -> np.ndarray:
    """Cumulative sum of f(x^t) - f_star; negative values are possible."""
    return np.cumsum(trace.f_round() - f_star)


def violation_trace(trace: RunTrace) -> np.ndarray:
    """||[sum_{tau<=t} g(x^tau)]^+||_2 per round."""
    cum = np.cumsum(trace.g_round(), axis=0)
    return np.linalg.norm(np.maximum(cum, 0.0), axis=1)


def strong_violation_trace(trace: RunTrace) -> np.ndarray:
    """||sum_{tau<=t} [g(x^tau)]^+||_1 per round (no cancellation).

    Reduces to sum_t [g(x^t)]^+ in the single-constraint case.
    """
    pos = np.maximum(trace.g_round(), 0.0)
    return np.cumsum(pos, axis=0).sum(axis=1)


def shift_trace(trace: RunTrace, A: list[np.ndarray] | None = None,
                b: np.ndarray | None = None) -> np.ndarray:
    """||sum_{tau<=t} (A x^tau - b)||_2 per round.

    Residuals are recomputed from the chosen points when (A, b) are
    given; otherwise the residuals recorded during the run are used.
    """
    if A is not None:
        if b is None:
            raise InputError("b is required when A is given")
        b = np.asarray(b, dtype=float).reshape(-1)
        res = sum(trace.xs[i] @ np.asarray(A[i], dtype=float).T
                  for i in range(trace.n_agents)) - b
    else:
        res = trace.affine_residual
    return np.linalg.norm(np.cumsum(res, axis=0), axis=1)


def best_iterate(trace: RunTrace, affine_tol: float = 1e-9):
    """Feasible sampled tuple with minimal objective, or None.

    Feasible means sum_i g_i(x^t) <= 0 elementwise (ground truth) and,
    when affine constraints exist, ||A x^t - b|| within tolerance.
    Returns (round_index, points, f_total).
    """
    if trace.T == 0:
        return None
    feasible = np.all(trace.g_round() <= 0.0, axis=1)
    if trace.l > 0:
        feasible &= np.linalg.norm(trace.affine_residual, axis=1) <= affine_tol
    if not feasible.any():
        return None
    totals = np.where(feasible, trace.f_round(), np.inf)
    t = int(np.argmin(totals))
    return t, [trace.xs[i][t].copy() for i in range(trace.n_agents)], float(totals[t])


# ---------------------------------------------------------------------------
# CSV round-trip
# ---------------------------------------------------------------------------


def trace_header(trace: RunTrace) -> list[str]:
    cols = ["method", "seed", "t"]
    for i in range(trace.n_agents):
        for d in range(trace.xs[i].shape[1]):
            cols.append(f"x{i}_{d}")
    cols.append("f_true")
    cols += [f"g_true_{j}" for j in range(trace.m)]
    cols += [f"lambda_{j}" for j in range(trace.m)]
    cols += [f"mu_{k}" for k in range(trace.l)]
    cols += ["R_t", "V_t", "Vplus_t", "S_t"]
    return cols


def write_trace_csv(trace: RunTrace, path, f_star: float | None = None) -> None:
    """Delimited trace with one row per round; floats at 17 significant digits."""
    R = regret_trace(trace, f_star) if f_star is not None else np.full(trace.T, np.nan)
    V = violation_trace(trace)
    Vp = strong_violation_trace(trace)
    S = shift_trace(trace)
    g_round = trace.g_round()
    f_round = trace.f_round()
    fmt = lambda v: CSV_FLOAT_FMT % v
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(trace))
        for t in range(trace.T):
            row = [trace.method, trace.seed, t + 1]
            for i in range(trace.n_agents):
                row += [fmt(v) for v in trace.xs[i][t]]
            row.append(fmt(f_round[t]))
            row += [fmt(v) for v in g_round[t]]
            row += [fmt(v) for v in trace.lam[t]]
            row += [fmt(v) for v in trace.mu[t]]
            row += [fmt(R[t]), fmt(V[t]), fmt(Vp[t]), fmt(S[t])]
            writer.writerow(row)


def read_trace_csv(path) -> dict:
    """Load a trace CSV into column arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out: dict[str, list] = {h: [] for h in header}
    for row in rows:
        for h, v in zip(header, row):
            out[h].append(v)
    cols: dict[str, np.ndarray | list] = {}
    for h, vals in out.items():
        if h == "method":
            cols[h] = vals
        elif h in ("seed", "t"):
            cols[h] = np.array([int(v) for v in vals])
        else:
            cols[h] = np.array([float(v) for v in vals])
    return cols
