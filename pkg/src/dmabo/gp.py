"""Gaussian-process regression with incremental Cholesky updates.

A posterior is immutable from the caller's perspective: ``predict`` is
read-only and ``update`` returns a new value. The model-noise parameter
``noise`` is the regression regularizer (it need not equal the oracle's
true noise level). The running information gain of the observed sequence,
0.5 * log det(I + K_t / noise), is accumulated one observation at a time
and is what the rest of the package uses as its information-gain proxy.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, NumericalError
from .kernels import KernelSpec, cholesky_with_jitter, kernel_diag, kernel_eval, kernel_matrix


class GPPosterior:
    """Regression state for one scalar output.

    Optionally carries a reference grid; predictions on that grid reuse an
    incrementally maintained solve and cost O(t * G) per update instead of
    O(t^2 * G) per batch query.
    """

    def __init__(self, kernel: KernelSpec, noise: float, grid=None):
        if noise <= 0:
            raise InputError("model noise must be positive")
        self.kernel = kernel
        self.noise = float(noise)
        self.X: np.ndarray | None = None          # (t, d)
        self.y = np.empty(0)                      # (t,)
        self._L = np.empty((0, 0))                # chol(K_t + noise I)
        self._u = np.empty(0)                     # L^-1 y
        self.info_gain = 0.0
        if grid is not None:
            self._grid = np.asarray(grid, dtype=float)
            self._grid_diag = kernel_diag(kernel, self._grid)
            self._V = np.empty((0, self._grid.shape[0]))  # L^-1 k(X, grid)
        else:
            self._grid = None
            self._grid_diag = None
            self._V = None

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    def _point(self, x) -> np.ndarray:
        a = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
        if self.X is not None and a.shape[0] != self.X.shape[1]:
            raise InputError(f"point has dimension {a.shape[0]}, posterior expects {self.X.shape[1]}")
        return a

    def predict(self, x) -> tuple[float, float]:
        """Posterior (mean, variance) at a single point."""
        x = self._point(x)
        kxx = kernel_eval(self.kernel, x, x)
        if self.n_obs == 0:
            return 0.0, kxx
        kvec = kernel_matrix(self.kernel, self.X, x[None, :])[:, 0]
        v = solve_triangular(self._L, kvec, lower=True)
        mean = float(v @ self._u)
        var = float(max(kxx - v @ v, 0.0))
        return mean, var

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances at the rows of X."""
        X = np.asarray(X, dtype=float)
        diag = kernel_diag(self.kernel, X)
        if self.n_obs == 0:
            return np.zeros(X.shape[0]), diag
        Ks = kernel_matrix(self.kernel, self.X, X)
        V = solve_triangular(self._L, Ks, lower=True)
        means = V.T @ self._u
        variances = np.maximum(diag - np.einsum("ij,ij->j", V, V), 0.0)
        return means, variances

    def predict_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Posterior over the attached reference grid (O(t*G) via the cache)."""
        if self._grid is None:
            raise InputError("posterior was built without a reference grid")
        if self.n_obs == 0:
            return np.zeros(self._grid.shape[0]), self._grid_diag.copy()
        means = self._V.T @ self._u
        variances = np.maximum(self._grid_diag - np.einsum("ij,ij->j", self._V, self._V), 0.0)
        return means, variances

    def update(self, x, y: float) -> "GPPosterior":
        """Return a new posterior that also conditions on (x, y)."""
        x = self._point(x)
        kxx = kernel_eval(self.kernel, x, x)
        t = self.n_obs
        if t == 0:
            w = np.empty(0)
            d2 = kxx + self.noise
        else:
            kvec = kernel_matrix(self.kernel, self.X, x[None, :])[:, 0]
            w = solve_triangular(self._L, kvec, lower=True)
            d2 = kxx + self.noise - w @ w
        if d2 <= self.noise * 1e-12:
            # Severe cancellation; rebuild from scratch with jitter escalation.
            return self._rebuild_with(x, y)
        d = np.sqrt(d2)
        var_pre = max(d2 - self.noise, 0.0)

        post = GPPosterior.__new__(GPPosterior)
        post.kernel = self.kernel
        post.noise = self.noise
        post.X = x[None, :] if t == 0 else np.vstack([self.X, x])
        post.y = np.append(self.y, y)
        L = np.zeros((t + 1, t + 1))
        L[:t, :t] = self._L
        L[t, :t] = w
        L[t, t] = d
        post._L = L
        post._u = np.append(self._u, (y - w @ self._u) / d)
        post.info_gain = self.info_gain + 0.5 * np.log1p(var_pre / self.noise)
        post._grid = self._grid
        post._grid_diag = self._grid_diag
        if self._grid is not None:
            kg = kernel_matrix(self.kernel, x[None, :], self._grid)[0]
            row = (kg - w @ self._V) / d
            post._V = np.vstack([self._V, row])
        else:
            post._V = None
        return post

    def _rebuild_with(self, x, y: float) -> "GPPosterior":
        X = x[None, :] if self.n_obs == 0 else np.vstack([self.X, x])
        yv = np.append(self.y, y)
        try:
            return batch_fit(self.kernel, self.noise, X, yv,
                             grid=self._grid, info_gain=None)
        except NumericalError as exc:
            raise NumericalError(f"incremental update failed and rebuild did not recover: {exc}") from exc


def batch_fit(kernel: KernelSpec, noise: float, X, y, grid=None, info_gain=None) -> GPPosterior:
    """Build a posterior in one shot from all observations.

    Used as the batch-construction reference for the incremental path;
    ``info_gain`` defaults to the determinant formula on the full factor.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InputError("X must be (t, d) with one target per row")
    post = GPPosterior(kernel, noise, grid=grid)
    if X.shape[0] == 0:
        return post
    K = kernel_matrix(kernel, X, X)
    K[np.diag_indices_from(K)] += noise
    L = cholesky_with_jitter(K)
    post.X = X
    post.y = y
    post._L = L
    post._u = solve_triangular(L, y, lower=True)
    if info_gain is None:
        # 0.5 log det(I + K/noise) from the factor of K + noise I
        t = X.shape[0]
        info_gain = float(np.sum(np.log(np.diag(L))) - 0.5 * t * np.log(noise))
    post.info_gain = info_gain
    if grid is not None:
        post._V = solve_triangular(L, kernel_matrix(kernel, X, post._grid), lower=True)
    return post
