"""Sensor attack model.

The attacker passes a fraction of the true output and adds the output of a
false trajectory that follows the closed-loop dynamics:

    v_n      = alpha * (C x_n + z_n) + C xi_n + zeta_n
    xi_{n+1} = (A + B K) xi_n + omega_n
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numerics import as_spd, cholesky

__all__ = ["AttackSpec", "AttackState", "attack_step"]


@dataclass(frozen=True)
class AttackSpec:
    """Attacker parameters.

    `sigma_o` is the covariance of the false-state noise (dimension of xi)
    and `sigma_s` that of the additive sensor noise (dimension of y).
    Scalars are accepted for both and expanded to isotropic matrices.
    """

    alpha: float
    xi0: np.ndarray
    sigma_o: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self):
        xi0 = np.atleast_1d(np.asarray(self.xi0, dtype=float))
        if xi0.ndim != 1 or not np.all(np.isfinite(xi0)):
            raise ValueError("xi0 must be a finite vector")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "xi0", xi0)
        object.__setattr__(self, "sigma_o", as_spd(self.sigma_o, "Sigma_O", dim=xi0.size))
        sigma_s = np.asarray(self.sigma_s, dtype=float)
        if sigma_s.ndim == 0:
            raise ValueError("scalar sigma_s needs an output dimension; use AttackSpec.isotropic")
        object.__setattr__(self, "sigma_s", as_spd(sigma_s, "Sigma_S"))

    @classmethod
    def isotropic(cls, alpha, state_dim, output_dim, sigma_o, sigma_s, xi0=None):
        """Spec with ``Sigma_O = sigma_o * I`` and ``Sigma_S = sigma_s * I``."""
        if xi0 is None:
            xi0 = np.zeros(state_dim)
        return cls(
            alpha=alpha,
            xi0=xi0,
            sigma_o=float(sigma_o) * np.eye(state_dim),
            sigma_s=float(sigma_s) * np.eye(output_dim),
        )

    @property
    def state_dim(self):
        return self.xi0.size

    @property
    def output_dim(self):
        return self.sigma_s.shape[0]

    @cached_property
    def chol_o(self):
        return cholesky(self.sigma_o)

    @cached_property
    def chol_s(self):
        return cholesky(self.sigma_s)

    def initial_state(self):
        return AttackState(self.xi0.copy())


@dataclass(frozen=True)
class AttackState:
    xi: np.ndarray


def attack_step(spec, state, true_output, closed_a, c, rng):
    """Advance the attacker one step.

    Parameters
    ----------
    spec : AttackSpec
    state : AttackState
        Current false state ``xi_n``.
    true_output : ndarray, shape (m,)
        ``C x_n + z_n`` as produced by the plant.
    closed_a : ndarray, shape (p, p)
        The closed-loop matrix ``A + B K`` the attacker imitates.
    c : ndarray, shape (m, p)
        Output map applied to the false state.
    rng : numpy.random.Generator
        Attacker noise stream; drawn as ``zeta`` first, then ``omega``.

    Returns
    -------
    v : ndarray, shape (m,)
    next_state : AttackState
    """
    xi = state.xi
    zeta = spec.chol_s @ rng.standard_normal(spec.output_dim)
    omega = spec.chol_o @ rng.standard_normal(spec.state_dim)
    v = spec.alpha * np.asarray(true_output) + c @ xi + zeta
    return v, AttackState(closed_a @ xi + omega)
