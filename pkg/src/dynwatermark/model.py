"""Plant definition and the watermarked closed loop.

Coordinates follow the usual observer-feedback layout: the stacked state
``(x, xhat)`` evolves under ``a_under`` and the error coordinates
``(x, delta)`` with ``delta = xhat - x`` evolve under ``a_dunder``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NoWatermarkPath, SingularExcitation, UnstableClosedLoop
from .numerics import (
    as_matrix,
    as_spd,
    dlqr_gain,
    is_schur_stable,
    kalman_gain,
    numerical_rank,
    solve_discrete_lyapunov,
    spectral_radius,
)

__all__ = [
    "ClosedLoopModel",
    "PlantModel",
    "assemble_closed_loop",
    "attacked_input_map",
    "compute_kprime",
    "controllability_matrix",
    "design_closed_loop",
    "is_controllable",
    "is_observable",
    "observability_matrix",
    "powered_input_map",
]


@dataclass(frozen=True)
class PlantModel:
    """Open-loop system ``x+ = A x + B u + w``, ``y = C x + z``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    sigma_w: np.ndarray
    sigma_z: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        p = a.shape[0]
        if a.shape != (p, p):
            raise ValueError(f"A must be square, got {a.shape}")
        b = as_matrix(self.b, "B")
        c = as_matrix(self.c, "C")
        if b.shape[0] != p:
            raise ValueError(f"B must have {p} rows, got {b.shape}")
        if c.shape[1] != p:
            raise ValueError(f"C must have {p} columns, got {c.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sigma_w", as_spd(self.sigma_w, "Sigma_W", dim=p))
        object.__setattr__(self, "sigma_z", as_spd(self.sigma_z, "Sigma_Z", dim=c.shape[0]))

    @property
    def p(self):
        return self.a.shape[0]

    @property
    def q(self):
        return self.b.shape[1]

    @property
    def m(self):
        return self.c.shape[0]


@dataclass(frozen=True)
class ClosedLoopModel:
    """Plant plus gains, watermark covariance and every derived quantity.

    Build it with :func:`assemble_closed_loop`; the constructor performs no
    validation of its own.
    """

    plant: PlantModel
    k_gain: np.ndarray
    l_gain: np.ndarray
    sigma_e: np.ndarray
    a_under: np.ndarray
    b_under: np.ndarray
    d_under: np.ndarray
    l_under: np.ndarray
    h_under: np.ndarray
    a_dunder: np.ndarray
    b_dunder: np.ndarray
    d_dunder: np.ndarray
    c_dunder: np.ndarray
    m_dunder: np.ndarray
    kprime: int
    sigma_x: np.ndarray
    sigma_delta: np.ndarray
    closed_a: np.ndarray = field(repr=False)

    @property
    def residual_covariance(self):
        """Limit of the residual covariance, ``C Sigma_Delta C^T + Sigma_Z``."""
        c = self.plant.c
        v = c @ self.sigma_delta @ c.T + self.plant.sigma_z
        return 0.5 * (v + v.T)

    @property
    def psi_covariance(self):
        """Block-diagonal target for the stacked (residual, lagged watermark) vector."""
        v = self.residual_covariance
        m, q = v.shape[0], self.sigma_e.shape[0]
        out = np.zeros((m + q, m + q))
        out[:m, :m] = v
        out[m:, m:] = self.sigma_e
        return out

    @property
    def lag(self):
        """Correlation lag ``k' + 1`` used by the watermark test."""
        return self.kprime + 1


def compute_kprime(a, b, c, k_gain):
    """Smallest ``k`` in ``0..p-1`` with ``C (A+BK)^k B`` numerically nonzero.

    Returns ``None`` when no such ``k`` exists (by Cayley-Hamilton no larger
    ``k`` can work either).  "Nonzero" means some entry exceeds
    ``1e-9 * (1 + |C| |B| |A+BK|^k)`` in Frobenius norms.
    """
    a, b, c, k_gain = (np.asarray(x, dtype=float) for x in (a, b, c, k_gain))
    closed = a + b @ k_gain
    scale = np.linalg.norm(c) * np.linalg.norm(b)
    closed_norm = np.linalg.norm(closed)
    prod = b
    for k in range(a.shape[0]):
        eps = 1e-9 * (1.0 + scale * closed_norm**k)
        if np.max(np.abs(c @ prod)) > eps:
            return k
        prod = closed @ prod
    return None


def assemble_closed_loop(plant, k_gain, l_gain, sigma_e):
    """Build the watermarked closed loop for fixed gains.

    Raises
    ------
    UnstableClosedLoop
        If ``A+BK`` or ``A+LC`` is not Schur stable.
    SingularExcitation
        If `sigma_e` is not strictly positive definite.
    NoWatermarkPath
        If ``C (A+BK)^k B`` vanishes for every ``k``.
    """
    p, q, m = plant.p, plant.q, plant.m
    a, b, c = plant.a, plant.b, plant.c
    k_gain = as_matrix(k_gain, "K")
    l_gain = as_matrix(l_gain, "L")
    if k_gain.shape != (q, p):
        raise ValueError(f"K must be {q}x{p}, got {k_gain.shape}")
    if l_gain.shape != (p, m):
        raise ValueError(f"L must be {p}x{m}, got {l_gain.shape}")
    sigma_e = as_spd(sigma_e, "Sigma_E", dim=q)
    if np.min(np.linalg.eigvalsh(sigma_e)) <= 0.0:
        raise SingularExcitation("Sigma_E must be full rank")

    closed_a = a + b @ k_gain
    observer_a = a + l_gain @ c
    if not is_schur_stable(closed_a):
        raise UnstableClosedLoop(f"rho(A+BK) = {spectral_radius(closed_a):.12f}")
    if not is_schur_stable(observer_a):
        raise UnstableClosedLoop(f"rho(A+LC) = {spectral_radius(observer_a):.12f}")

    kprime = compute_kprime(a, b, c, k_gain)
    if kprime is None:
        raise NoWatermarkPath("C (A+BK)^k B = 0 for every k <= p-1")

    zp = np.zeros((p, p))
    eye = np.eye(p)
    lc = l_gain @ c
    a_under = np.block([[a, b @ k_gain], [-lc, closed_a + lc]])
    b_under = np.vstack([b, b])
    d_under = np.vstack([eye, zp])
    l_under = np.vstack([np.zeros((p, m)), -l_gain])
    h_under = np.block([[zp, zp], [-lc, zp]])
    a_dunder = np.block([[closed_a, b @ k_gain], [zp, observer_a]])
    b_dunder = np.vstack([b, np.zeros((p, q))])
    d_dunder = np.vstack([eye, -eye])
    c_dunder = np.hstack([-c, c])
    m_dunder = np.hstack([zp, eye])

    forcing_x = (
        b_dunder @ sigma_e @ b_dunder.T
        + d_dunder @ plant.sigma_w @ d_dunder.T
        + l_under @ plant.sigma_z @ l_under.T
    )
    sigma_x = solve_discrete_lyapunov(a_dunder, forcing_x)
    sigma_delta = solve_discrete_lyapunov(
        observer_a, plant.sigma_w + l_gain @ plant.sigma_z @ l_gain.T
    )
    return ClosedLoopModel(
        plant=plant,
        k_gain=k_gain,
        l_gain=l_gain,
        sigma_e=sigma_e,
        a_under=a_under,
        b_under=b_under,
        d_under=d_under,
        l_under=l_under,
        h_under=h_under,
        a_dunder=a_dunder,
        b_dunder=b_dunder,
        d_dunder=d_dunder,
        c_dunder=c_dunder,
        m_dunder=m_dunder,
        kprime=kprime,
        sigma_x=sigma_x,
        sigma_delta=sigma_delta,
        closed_a=closed_a,
    )


def design_closed_loop(plant, sigma_e, q_scale=1.0, r_scale=1.0, w_scale=1.0, z_scale=1.0):
    """Synthesize LQR and Kalman gains with scaled identity weights, then assemble.

    The observer weights are design knobs, not the plant noise: the
    covariances used by the detector always come from `plant`.
    """
    p, q, m = plant.p, plant.q, plant.m
    k_gain = dlqr_gain(plant.a, plant.b, q_scale * np.eye(p), r_scale * np.eye(q))
    l_gain = kalman_gain(plant.a, plant.c, w_scale * np.eye(p), z_scale * np.eye(m))
    return assemble_closed_loop(plant, k_gain, l_gain, sigma_e)


def powered_input_map(model, r):
    """``a_under**r @ b_under`` by repeated multiplication."""
    return attacked_input_map(model, 0.0, r)


def attacked_input_map(model, alpha, k):
    """``(a_under + alpha * h_under)**k @ b_under``: input map under the attack."""
    if k < 0 or k > 2 * model.plant.p:
        raise ValueError(f"power must lie in 0..{2 * model.plant.p}, got {k}")
    dyn = model.a_under + alpha * model.h_under if alpha else model.a_under
    out = model.b_under.copy()
    for _ in range(k):
        out = dyn @ out
    return out


def controllability_matrix(a, b):
    blocks = [np.asarray(b, dtype=float)]
    for _ in range(a.shape[0] - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(a, c):
    return controllability_matrix(np.asarray(a).T, np.asarray(c).T).T


def is_controllable(a, b):
    return numerical_rank(controllability_matrix(a, b)) == a.shape[0]


def is_observable(a, c):
    return numerical_rank(observability_matrix(a, c)) == a.shape[0]
