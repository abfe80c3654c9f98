"""Dense matrix primitives and structured solvers.

Matrices are plain two-dimensional ``float64`` numpy arrays.  Covariance-like
inputs go through :func:`as_spd`, which symmetrizes and checks positive
semidefiniteness once so downstream code can rely on it.
"""

import numpy as np

from .errors import (
    NoConvergence,
    NotConverged,
    NotDetectable,
    NotPositiveSemidefinite,
    NotStabilizable,
)

__all__ = [
    "SCHUR_MARGIN",
    "as_matrix",
    "as_spd",
    "cholesky",
    "dlqr_gain",
    "is_schur_stable",
    "kalman_gain",
    "numerical_rank",
    "solve_discrete_lyapunov",
    "spectral_radius",
]

# "Schur stable" means spectral radius below 1 - SCHUR_MARGIN.
SCHUR_MARGIN = 1e-9

_CHOL_TOL = 1e-10
_LYAP_STEP_TOL = 1e-14
_LYAP_RESIDUAL_TOL = 1e-10
_LYAP_MAX_DOUBLINGS = 128
_RICCATI_TOL = 1e-12
_RICCATI_MAX_ITER = 10_000


def as_matrix(a, name="matrix"):
    """Return `a` as a finite 2-D float array (scalars become 1x1)."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {m.shape}")
    if m.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_spd(a, name="matrix", dim=None):
    """Symmetrize `a` and check it is positive semidefinite.

    A scalar combined with `dim` is read as ``scalar * I(dim)``.
    """
    m = np.array(a, dtype=float)
    if m.ndim == 0 and dim is not None:
        m = float(m) * np.eye(dim)
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValueError(f"{name} must be {dim}x{dim}, got {m.shape}")
    m = 0.5 * (m + m.T)
    cholesky(m)
    return m


def cholesky(m, tol=_CHOL_TOL):
    """Lower-triangular factor ``L`` with ``L @ L.T == m``.

    Semidefinite inputs are accepted: a pivot below ``tol * max(diag)`` has
    its column zeroed instead of failing.

    Raises
    ------
    NotPositiveSemidefinite
        If a pivot is below ``-tol * max(diag)`` or the zeroed pivots leave
        a reconstruction error above ``10 sqrt(tol)`` relative.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.ndim != 2 or m.shape[1] != n:
        raise ValueError(f"cholesky needs a square matrix, got shape {m.shape}")
    m = 0.5 * (m + m.T)
    scale = max(float(np.max(np.diag(m))), 0.0)
    thresh = tol * scale
    L = np.zeros_like(m)
    zeroed = False
    for j in range(n):
        d = m[j, j] - L[j, :j] @ L[j, :j]
        if d < -thresh or (scale == 0.0 and d < 0.0):
            raise NotPositiveSemidefinite(f"pivot {j} is {d:.3e} (tolerance {thresh:.3e})")
        if d <= thresh:
            zeroed = True
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (m[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    if zeroed:
        norm = np.linalg.norm(m)
        # dropping a pivot d discards off-diagonals up to sqrt(d * max diag)
        if np.linalg.norm(L @ L.T - m) > 10.0 * np.sqrt(tol) * max(norm, np.finfo(float).tiny):
            raise NotPositiveSemidefinite("matrix is indefinite (rank-deficient pivots inconsistent)")
    return L


def spectral_radius(a):
    """Largest eigenvalue modulus of the square matrix `a`."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {a.shape}")
    try:
        # LAPACK geev: balancing, Hessenberg reduction, shifted QR.
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return float(np.max(np.abs(eig)))


def is_schur_stable(a, margin=SCHUR_MARGIN):
    return spectral_radius(a) < 1.0 - margin


def numerical_rank(a, rtol=1e-9):
    """Number of singular values above ``rtol`` times the largest one."""
    s = np.linalg.svd(as_matrix(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def solve_discrete_lyapunov(a, q):
    """Solve ``X = A X A^T + Q`` by the doubling iteration.

    Each doubling step maps ``X <- X + A X A^T`` and ``A <- A @ A``, so after
    ``k`` steps ``X`` holds the first ``2**k`` terms of the series
    ``sum_j A^j Q (A^j)^T``.

    Raises
    ------
    NotConverged
        When 128 doublings do not reach tolerance, which happens when the
        spectral radius of `a` is at least one.
    """
    a = as_matrix(a, "a")
    q = np.asarray(q, dtype=float)
    if a.shape[0] != a.shape[1] or q.shape != a.shape:
        raise ValueError(f"incompatible shapes {a.shape} and {q.shape}")
    x = 0.5 * (q + q.T)
    ak = a.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(_LYAP_MAX_DOUBLINGS):
            step = ak @ x @ ak.T
            x_next = x + step
            x_next = 0.5 * (x_next + x_next.T)
            if not np.all(np.isfinite(x_next)):
                break
            ak = ak @ ak
            size = np.linalg.norm(x_next)
            if not np.isfinite(size):
                break
            x = x_next
            if np.linalg.norm(step) <= _LYAP_STEP_TOL * size or size == 0.0:
                residual = np.linalg.norm(x - a @ x @ a.T - q)
                if residual <= _LYAP_RESIDUAL_TOL * max(size, np.finfo(float).tiny):
                    return x
                break
    raise NotConverged("discrete Lyapunov doubling did not converge (spectral radius >= 1?)")


def _riccati_fixed_point(a, b, q, r):
    """Iterate the control-form DARE from ``P = Q``; ``None`` on divergence."""
    p = q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(_RICCATI_MAX_ITER):
            bp = b.T @ p
            gain = np.linalg.solve(r + bp @ b, bp @ a)
            p_next = a.T @ p @ a - a.T @ p @ b @ gain + q
            p_next = 0.5 * (p_next + p_next.T)
            if not np.all(np.isfinite(p_next)):
                return None
            change = np.linalg.norm(p_next - p)
            p = p_next
            if change <= _RICCATI_TOL * max(np.linalg.norm(p), np.finfo(float).tiny):
                return p
    return None


def dlqr_gain(a, b, q, r):
    """State-feedback gain ``K`` (sign convention ``u = K x``) from the DARE.

    Returns ``K = -(R + B^T P B)^{-1} B^T P A`` with ``A + B K`` Schur stable.
    """
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    p_dim, q_dim = b.shape
    if a.shape != (p_dim, p_dim):
        raise ValueError(f"a must be {p_dim}x{p_dim}, got {a.shape}")
    q = as_spd(q, "q", dim=p_dim)
    r = as_spd(r, "r", dim=q_dim)
    if np.min(np.linalg.eigvalsh(r)) <= 0.0:
        raise ValueError("r must be strictly positive definite")
    p = _riccati_fixed_point(a, b, q, r)
    if p is None:
        raise NotStabilizable("Riccati iteration diverged")
    k = -np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    if not is_schur_stable(a + b @ k):
        raise NotStabilizable(f"A+BK has spectral radius {spectral_radius(a + b @ k):.12f}")
    return k


def kalman_gain(a, c, sw, sz):
    """Observer gain ``L`` (sign convention ``A + L C`` stable) from the dual DARE."""
    a, c = as_matrix(a, "a"), as_matrix(c, "c")
    m_dim, p_dim = c.shape
    if a.shape != (p_dim, p_dim):
        raise ValueError(f"a must be {p_dim}x{p_dim}, got {a.shape}")
    sw = as_spd(sw, "sw", dim=p_dim)
    sz = as_spd(sz, "sz", dim=m_dim)
    if np.min(np.linalg.eigvalsh(sz)) <= 0.0:
        raise ValueError("sz must be strictly positive definite")
    p = _riccati_fixed_point(a.T, c.T, sw, sz)
    if p is None:
        raise NotDetectable("Riccati iteration diverged")
    l_gain = -a @ p @ c.T @ np.linalg.inv(c @ p @ c.T + sz)
    if not is_schur_stable(a + l_gain @ c):
        raise NotDetectable(f"A+LC has spectral radius {spectral_radius(a + l_gain @ c):.12f}")
    return l_gain
