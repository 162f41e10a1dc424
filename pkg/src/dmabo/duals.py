"""Dual variables of the primal-dual loop.

``lam`` is the virtual queue for the coupled black-box constraints
(projected onto the nonnegative orthant each round); ``mu`` accumulates
the affine residuals without projection, so mu_{T+1} - mu_1 equals the
summed residuals exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True, eq=False)
class DualState:
    lam: np.ndarray            # (m,), >= 0 elementwise
    mu: np.ndarray             # (l,)
    eta: float                 # primal scaling of the dual terms
    epsilon: float = 0.0       # pessimistic drift added to lam each round

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if np.any(lam < 0):
            raise InputError("lam must be nonnegative elementwise")
        if self.eta <= 0:
            raise InputError("eta must be positive")
        if self.epsilon < 0:
            raise InputError("epsilon must be nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    def potential(self) -> float:
        """0.5 ||lam||^2 + 0.5 ||mu||^2."""
        return 0.5 * float(self.lam @ self.lam) + 0.5 * float(self.mu @ self.mu)


def dual_update(dual: DualState, sum_lcb_g: np.ndarray, affine_residual: np.ndarray) -> DualState:
    """One ascent step: lam <- [lam + sum_lcb_g + eps]^+, mu <- mu + residual."""
    sum_lcb_g = np.asarray(sum_lcb_g, dtype=float).reshape(-1)
    affine_residual = np.asarray(affine_residual, dtype=float).reshape(-1)
    if sum_lcb_g.shape != dual.lam.shape:
        raise InputError(f"sum_lcb_g has shape {sum_lcb_g.shape}, expected {dual.lam.shape}")
    if affine_residual.shape != dual.mu.shape:
        raise InputError(f"affine_residual has shape {affine_residual.shape}, expected {dual.mu.shape}")
    lam = np.maximum(dual.lam + sum_lcb_g + dual.epsilon, 0.0)
    mu = dual.mu + affine_residual
    return DualState(lam=lam, mu=mu, eta=dual.eta, epsilon=dual.epsilon)
