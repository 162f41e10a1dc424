"""Kernel evaluation, jittered Cholesky factorization, and prior sampling.

All kernels are normalized so that k(x, x) equals the output scale, which
is capped at 1. Domains throughout the package are finite grids stored as
(G, d) arrays; a function sampled from the prior is tabulated on its grid
and is treated as ground truth only there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError

SQUARED_EXPONENTIAL = "squared-exponential"
MATERN52 = "matern52"
_FAMILIES = (SQUARED_EXPONENTIAL, MATERN52)

# Relative jitter schedule for near-singular Gram matrices.
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Stationary kernel: family, per-dimension lengthscale, output scale.

    The output scale must lie in (0, 1] so that k(x, x) <= 1.
    """

    family: str = SQUARED_EXPONENTIAL
    lengthscale: float | np.ndarray = 1.0
    output_scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {_FAMILIES}")
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if ls.ndim != 1 or np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise InputError("lengthscale must be positive (scalar or one value per dimension)")
        if not (0.0 < self.output_scale <= 1.0):
            raise InputError("output_scale must lie in (0, 1] (normalized kernel)")
        object.__setattr__(self, "lengthscale", ls)


def _as_points(x) -> np.ndarray:
    """Coerce a point or batch of points to a (n, d) float array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise InputError(f"points must be scalars, vectors, or (n, d) arrays, got ndim={a.ndim}")
    return a


def _scaled_sqdist(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    ls = spec.lengthscale
    if ls.size > 1 and ls.size != X.shape[1]:
        raise InputError(f"kernel declares {ls.size} dimensions, points have {X.shape[1]}")
    Xs = X / ls
    Ys = Y / ls
    # (x-y)^2 = x^2 + y^2 - 2xy, clipped against round-off
    d2 = (Xs * Xs).sum(axis=1)[:, None] + (Ys * Ys).sum(axis=1)[None, :] - 2.0 * Xs @ Ys.T
    return np.maximum(d2, 0.0)


def kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """Gram block k(X, Y) with X: (n, d) and Y: (m, d)."""
    X = _as_points(X)
    Y = _as_points(Y)
    d2 = _scaled_sqdist(spec, X, Y)
    if spec.family == SQUARED_EXPONENTIAL:
        K = np.exp(-0.5 * d2)
    else:  # Matern 5/2
        r = np.sqrt(5.0 * d2)
        K = (1.0 + r + r * r / 3.0) * np.exp(-r)
    return spec.output_scale * K


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Scalar kernel value k(x, x2)."""
    return float(kernel_matrix(spec, x, x2)[0, 0])


def kernel_diag(spec: KernelSpec, X) -> np.ndarray:
    """Diagonal k(x, x) for each row of X (constant for stationary kernels)."""
    X = _as_points(X)
    return np.full(X.shape[0], spec.output_scale)


def cholesky_with_jitter(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of K, escalating a relative diagonal jitter.

    Starts at 1e-10 * diag(K) and multiplies by 10 up to 1e-4 before
    giving up with a NumericalError.
    """
    diag = np.diag(K).copy()
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(K + np.diag(jitter * diag) if jitter else K)
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise NumericalError(
                    f"Cholesky failed after jitter escalation up to {JITTER_MAX:g}"
                ) from None


class TabulatedFunction:
    """Real-valued function defined only on the rows of a finite grid.

    Lookup is by exact float match, which is safe because every caller
    passes grid rows verbatim.
    """

    def __init__(self, grid, values):
        self.grid = _as_points(grid)
        self.values = np.asarray(values, dtype=float).reshape(-1)
        if self.grid.shape[0] != self.values.shape[0]:
            raise InputError("grid and values must have the same length")
        self._index = {row.tobytes(): i for i, row in enumerate(self.grid)}

    def index_of(self, x) -> int:
        key = _as_points(x)[0].tobytes()
        try:
            return self._index[key]
        except KeyError:
            raise InputError(f"point {np.asarray(x)!r} is not on the function's grid") from None

    def __call__(self, x) -> float:
        return float(self.values[self.index_of(x)])

    def shifted(self, delta: float) -> "TabulatedFunction":
        return TabulatedFunction(self.grid, self.values + delta)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_json(self) -> dict:
        return {"type": "table", "values": self.values.tolist()}


def sample_prior_function(spec: KernelSpec, grid, seed) -> TabulatedFunction:
    """Draw one function from N(0, K_grid + jitter I), tabulated on the grid.

    Deterministic given the seed; grid points must be distinct.
    """
    grid = _as_points(grid)
    if grid.shape[0] == 0:
        raise InputError("grid must be nonempty")
    if len({row.tobytes() for row in grid}) != grid.shape[0]:
        raise InputError("grid points must be distinct")
    K = kernel_matrix(spec, grid, grid)
    K[np.diag_indices_from(K)] += JITTER_START * np.diag(K)
    L = cholesky_with_jitter(K)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    values = L @ rng.standard_normal(grid.shape[0])
    return TabulatedFunction(grid, values)
