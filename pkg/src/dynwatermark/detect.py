"""Attack detection statistics.

Two families of tests are provided:

* running deviations of the residual covariance and of the
  residual/watermark cross-correlation at lag ``k' + 1`` from their
  attack-free limits; both go to zero for an honest system;
* a windowed test on the stacked vector ``psi_n = (C xhat_n - y_n, e_{n-k'-1})``
  that thresholds a Wishart negative log-likelihood.
"""

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .errors import NotSpecialCase, OutOfRange, SingularWindow, WindowTooShort
from .numerics import as_spd, cholesky
from .simulate import SimulationConfig, run_simulation

__all__ = [
    "DetectionReport",
    "Verdict",
    "build_psi_sequence",
    "build_report",
    "calibrate_threshold",
    "default_window",
    "deviation_stat_covariance",
    "deviation_stat_watermark",
    "hypothesis_test",
    "lagged_correlation",
    "legacy_lag1_stat",
    "specialized_full_state_residual",
    "window_nll_values",
    "windowed_scatter",
    "wishart_nll",
]


class Verdict(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


def _lagged(e, lag):
    """``e`` shifted down by `lag` rows, zero-filled at the top."""
    out = np.zeros_like(e)
    if lag < len(e):
        out[lag:] = e[:len(e) - lag]
    return out


def _running_mean(outer):
    counts = np.arange(1, outer.shape[0] + 1, dtype=float)
    return np.cumsum(outer, axis=0) / counts[:, None, None]


def deviation_stat_covariance(trace, model):
    """Running ``|(1/N') sum r r^T - (C Sigma_Delta C^T + Sigma_Z)|_F`` for N' = 1..N."""
    r = trace.residual
    mean = _running_mean(r[:, :, None] * r[:, None, :])
    return np.linalg.norm(mean - model.residual_covariance, axis=(1, 2))


def deviation_stat_watermark(trace, model, lag=None):
    """Running ``|(1/N') sum r_n e_{n-lag}^T|_F`` with ``lag = k' + 1`` by default."""
    lag = model.lag if lag is None else lag
    r, e = trace.residual, _lagged(trace.e, lag)
    mean = _running_mean(r[:, :, None] * e[:, None, :])
    return np.linalg.norm(mean, axis=(1, 2))


def legacy_lag1_stat(trace, model, lag=1):
    """Running ``|(1/N') sum L r_n e_{n-lag}^T|_F``, the innovations test that
    always correlates one step back."""
    r, e = trace.residual @ model.l_gain.T, _lagged(trace.e, lag)
    mean = _running_mean(r[:, :, None] * e[:, None, :])
    return np.linalg.norm(mean, axis=(1, 2))


def lagged_correlation(trace, lag):
    """Final ``(1/N) sum_n r_n e_{n-lag}^T`` as an ``m x q`` matrix."""
    r, e = trace.residual, _lagged(trace.e, lag)
    return r.T @ e / len(r)


def build_psi_sequence(trace, kprime):
    """Rows ``psi_n = [r_n, e_{n-k'-1}]`` for ``n = k'+1 .. N-1``.

    Residual components come first, watermark components last.
    """
    lag = kprime + 1
    n_steps = len(trace.residual)
    if n_steps <= lag:
        raise OutOfRange(f"trace of length {n_steps} is too short for lag {lag}")
    return np.hstack([trace.residual[lag:], trace.e[:n_steps - lag]])


def windowed_scatter(psi, ell, window_index, offset=0):
    """``S = (1/ell) sum psi psi^T`` over disjoint window `window_index`.

    Window ``i`` covers rows ``offset + i*ell`` up to (excluding)
    ``offset + (i+1)*ell``.
    """
    psi = np.asarray(psi, dtype=float)
    dim = psi.shape[1]
    if ell < dim:
        raise WindowTooShort(f"window length {ell} < m + q = {dim}")
    start = offset + window_index * ell
    if window_index < 0 or start + ell > psi.shape[0]:
        raise OutOfRange(f"window {window_index} does not fit in {psi.shape[0]} rows")
    block = psi[start:start + ell]
    s = block.T @ block / ell
    return 0.5 * (s + s.T)


def wishart_nll(s, sigma_delta_c, sigma_e, ell):
    """``(m+q+1-ell) log det S + trace(blockdiag(V^-1, Sigma_E^-1) S)``.

    ``V`` is the residual covariance target ``C Sigma_Delta C^T + Sigma_Z``.
    The log-determinant uses the Cholesky factor of `s`.

    Raises
    ------
    SingularWindow
        If `s` is singular, e.g. because the watermark is identically zero.
    """
    s = np.asarray(s, dtype=float)
    v = as_spd(sigma_delta_c, "residual covariance")
    sigma_e = as_spd(sigma_e, "Sigma_E")
    m, q = v.shape[0], sigma_e.shape[0]
    if s.shape != (m + q, m + q):
        raise ValueError(f"S must be {(m + q)}x{(m + q)}, got {s.shape}")
    factor = cholesky(s)
    diag = np.diag(factor)
    if np.any(diag <= 0.0):
        raise SingularWindow("window scatter matrix is singular")
    logdet = 2.0 * np.sum(np.log(diag))
    trace_term = np.trace(np.linalg.solve(v, s[:m, :m])) + np.trace(np.linalg.solve(sigma_e, s[m:, m:]))
    return float((m + q + 1 - ell) * logdet + trace_term)


def hypothesis_test(nll_value, tau):
    """Reject iff the negative log-likelihood exceeds the threshold."""
    return Verdict.REJECT if nll_value > tau else Verdict.ACCEPT


def default_window(model):
    plant = model.plant
    return 20 * (plant.m + plant.q)


def window_nll_values(trace, model, ell, burn_in=False):
    """NLL of every complete disjoint window and the step that closes it.

    The likelihood is evaluated on the window sum ``ell * S``, which is
    Wishart with ``ell`` degrees of freedom and scale ``psi_covariance``
    under the null.  With `burn_in` the first `ell` psi rows are skipped.
    """
    psi = build_psi_sequence(trace, model.kprime)
    offset = ell if burn_in else 0
    n_windows = max((psi.shape[0] - offset) // ell, 0)
    v, sigma_e = model.residual_covariance, model.sigma_e
    values = np.empty(n_windows)
    for i in range(n_windows):
        s = windowed_scatter(psi, ell, i, offset=offset)
        values[i] = wishart_nll(ell * s, v, sigma_e, ell)
    ends = model.lag + offset + ell * np.arange(1, n_windows + 1) - 1
    return values, ends


def calibrate_threshold(model, ell, alpha_fa, runs, seed, burn_in=False):
    """Empirical ``(1 - alpha_fa)`` quantile of the window NLL under no attack.

    `runs` consecutive disjoint windows are drawn from a single attack-free
    simulation of the matched model (world = detector plant) and the
    quantile is interpolated linearly between order statistics.
    """
    if not 0.0 < alpha_fa < 1.0:
        raise ValueError(f"alpha_fa must lie in (0, 1), got {alpha_fa}")
    if runs < 100:
        raise ValueError(f"need at least 100 calibration windows, got {runs}")
    horizon = model.lag + (ell if burn_in else 0) + runs * ell
    config = SimulationConfig(world=model.plant, detector=model, horizon=horizon, seed=seed)
    values, _ = window_nll_values(run_simulation(config), model, ell, burn_in=burn_in)
    return float(np.quantile(values[:runs], 1.0 - alpha_fa, method="linear"))


def specialized_full_state_residual(trace, model):
    """``y_{n+1} - A y_n - B K xhat_n - B e_n`` for ``n = 0..N-2``.

    Defined for full-state measurement (``C = I``) with the observer gain
    ``L = -A``, where it equals ``-(C xhat_{n+1} - y_{n+1})``.
    """
    plant = model.plant
    a, b, c = plant.a, plant.b, plant.c
    scale = max(np.linalg.norm(a), 1.0)
    if c.shape != a.shape or not np.allclose(c, np.eye(plant.p), rtol=0, atol=1e-12):
        raise NotSpecialCase("C must be the identity")
    if np.linalg.norm(model.l_gain + a) > 1e-12 * scale:
        raise NotSpecialCase("L must equal -A")
    y, xhat, e = trace.y, trace.xhat, trace.e
    return y[1:] - y[:-1] @ a.T - xhat[:-1] @ (b @ model.k_gain).T - e[:-1] @ b.T


@dataclass(frozen=True)
class DetectionReport:
    d1: np.ndarray
    d2: np.ndarray
    nll: np.ndarray
    verdicts: tuple
    tau: float
    ell: int
    alpha_fa: float
    window_ends: np.ndarray
    d_legacy: np.ndarray

    @property
    def reject_rate(self):
        if not self.verdicts:
            return float("nan")
        return sum(v is Verdict.REJECT for v in self.verdicts) / len(self.verdicts)

    def to_csv(self, path):
        """One row per step; NLL and verdict filled only on window-closing steps.

        Columns: ``step_or_window,d1,d2,nll,verdict,tau,d_legacy``.
        """
        closing = {int(n): i for i, n in enumerate(self.window_ends)}
        tau = repr(float(self.tau))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step_or_window", "d1", "d2", "nll", "verdict", "tau", "d_legacy"])
            for n, (d1, d2, dl) in enumerate(zip(self.d1.tolist(), self.d2.tolist(), self.d_legacy.tolist())):
                i = closing.get(n)
                nll = repr(float(self.nll[i])) if i is not None else ""
                verdict = self.verdicts[i].value if i is not None else ""
                writer.writerow([n, repr(d1), repr(d2), nll, verdict, tau, repr(dl)])


def build_report(trace, model, tau, ell=None, alpha_fa=0.05, burn_in=False):
    ell = default_window(model) if ell is None else ell
    nll, ends = window_nll_values(trace, model, ell, burn_in=burn_in)
    return DetectionReport(
        d1=deviation_stat_covariance(trace, model),
        d2=deviation_stat_watermark(trace, model),
        nll=nll,
        verdicts=tuple(hypothesis_test(x, tau) for x in nll),
        tau=float(tau),
        ell=ell,
        alpha_fa=alpha_fa,
        window_ends=ends,
        d_legacy=legacy_lag1_stat(trace, model),
    )
