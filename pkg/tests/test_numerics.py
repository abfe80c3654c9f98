import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _systems import random_schur
from dynwatermark.errors import NotConverged, NotDetectable, NotPositiveSemidefinite, NotStabilizable
from dynwatermark.numerics import (
    _riccati_fixed_point,
    as_spd,
    cholesky,
    dlqr_gain,
    is_schur_stable,
    kalman_gain,
    numerical_rank,
    solve_discrete_lyapunov,
    spectral_radius,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_cholesky_small_example():
    factor = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    np.testing.assert_allclose(factor, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=0, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 4), elements=finite))
def test_cholesky_matches_lapack_on_spd(g):
    m = g @ g.T + 0.1 * np.eye(4)
    np.testing.assert_allclose(cholesky(m), np.linalg.cholesky(m), rtol=1e-9, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (5, 2), elements=finite))
def test_cholesky_rank_deficient_reconstructs(g):
    m = g @ g.T
    factor = cholesky(m)
    assert np.allclose(np.triu(factor, 1), 0.0)
    assert np.linalg.norm(factor @ factor.T - m) <= 1e-4 * max(np.linalg.norm(m), 1e-300)


def test_cholesky_well_scaled_rank_deficient_is_exact():
    rng = np.random.default_rng(2)
    for _ in range(50):
        q, _ = np.linalg.qr(rng.normal(size=(6, 3)))
        m = q @ np.diag(rng.uniform(0.5, 2.0, 3)) @ q.T
        factor = cholesky(m)
        assert np.linalg.norm(factor @ factor.T - m) <= 1e-8 * np.linalg.norm(m)
    with pytest.raises(NotPositiveSemidefinite):
        cholesky(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveSemidefinite):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotPositiveSemidefinite):
        cholesky(np.diag([1.0, -1.0]))


def test_as_spd_expands_scalars_and_symmetrizes():
    np.testing.assert_array_equal(as_spd(0.5, dim=3), 0.5 * np.eye(3))
    out = as_spd([[2.0, 1.0], [0.0, 2.0]])
    np.testing.assert_array_equal(out, out.T)


def test_lyapunov_scalar():
    # x = a^2 x + q  ->  x = q / (1 - a^2)
    np.testing.assert_allclose(solve_discrete_lyapunov([[0.5]], np.array([[1.0]])), [[4.0 / 3.0]], rtol=1e-14)


def test_lyapunov_residual_and_scipy_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = int(rng.integers(1, 9))
        a = random_schur(rng, p, rng.uniform(0.05, 0.98))
        g = rng.normal(size=(p, p))
        q = g @ g.T
        x = solve_discrete_lyapunov(a, q)
        assert np.linalg.norm(x - a @ x @ a.T - q) <= 1e-10 * np.linalg.norm(x)
        oracle = scipy.linalg.solve_discrete_lyapunov(a, q)
        assert np.linalg.norm(x - oracle) <= 1e-8 * np.linalg.norm(oracle)
        np.testing.assert_array_equal(x, x.T)


def test_lyapunov_unstable_raises():
    with pytest.raises(NotConverged):
        solve_discrete_lyapunov([[1.0]], np.eye(1))
    with pytest.raises(NotConverged):
        solve_discrete_lyapunov([[1.5, 0.0], [0.0, 0.2]], np.eye(2))


def test_scalar_dare_closed_form():
    p = _riccati_fixed_point(np.array([[2.0]]), np.array([[1.0]]), np.eye(1), np.eye(1))
    assert abs(p[0, 0] - (2.0 + np.sqrt(5.0))) <= 1e-9
    k = dlqr_gain(2.0, 1.0, 1.0, 1.0)
    np.testing.assert_allclose(k, [[-2.0 * p[0, 0] / (1.0 + p[0, 0])]], rtol=1e-12)
    assert spectral_radius(2.0 + k) < 1.0 - 1e-9


def test_dlqr_and_kalman_match_scipy_dare():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p, q, m = 4, 2, 2
        a = rng.normal(size=(p, p))
        b = rng.normal(size=(p, q))
        c = rng.normal(size=(m, p))
        qw, rw = np.eye(p), np.eye(q)
        k = dlqr_gain(a, b, qw, rw)
        pp = scipy.linalg.solve_discrete_are(a, b, qw, rw)
        np.testing.assert_allclose(k, -np.linalg.solve(rw + b.T @ pp @ b, b.T @ pp @ a), rtol=1e-7, atol=1e-9)
        assert is_schur_stable(a + b @ k)

        sw, sz = 0.3 * np.eye(p), 2.0 * np.eye(m)
        l_gain = kalman_gain(a, c, sw, sz)
        po = scipy.linalg.solve_discrete_are(a.T, c.T, sw, sz)
        oracle = -a @ po @ c.T @ np.linalg.inv(c @ po @ c.T + sz)
        np.testing.assert_allclose(l_gain, oracle, rtol=1e-7, atol=1e-9)
        assert is_schur_stable(a + l_gain @ c)


def test_unstabilizable_and_undetectable_raise():
    a = np.diag([2.0, 0.5])
    with pytest.raises(NotStabilizable):
        dlqr_gain(a, [[0.0], [1.0]], np.eye(2), np.eye(1))
    with pytest.raises(NotDetectable):
        kalman_gain(a, [[0.0, 1.0]], np.eye(2), np.eye(1))


def test_spectral_radius_known_values():
    assert spectral_radius([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(1.0, abs=1e-14)
    assert spectral_radius([[0.5, 100.0], [0.0, -0.7]]) == pytest.approx(0.7, abs=1e-14)
    assert not is_schur_stable([[1.0 - 1e-10]])
    assert is_schur_stable([[1.0 - 1e-8]])


def test_spectral_radius_against_gelfand_estimate():
    # rho = lim |A^k|^(1/k); after normalization the power stays bounded
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.normal(size=(5, 5))
        rho = spectral_radius(a)
        power = np.linalg.matrix_power(a / rho, 400)
        assert np.linalg.norm(power) ** (1 / 400) == pytest.approx(1.0, abs=0.05)


def test_numerical_rank():
    assert numerical_rank(np.outer([1.0, 2.0, 3.0], [1.0, 1.0])) == 1
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank(np.zeros((2, 2))) == 0
