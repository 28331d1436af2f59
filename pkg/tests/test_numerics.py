import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from parament.linalg import RiccatiError, care, care_residual, expm2, lyap
from parament.ode import IntegrationError, integrate


def test_dp54_linear_system_exact():
    L = np.array([[-0.1, 2.0], [-2.0, -0.1]])
    t = np.linspace(0, 10, 41)
    ys, n = integrate(lambda t, y: L @ y, np.array([1.0, 0.0]), t, rtol=1e-11, atol=1e-13)
    ref = np.array([sla.expm(L * ti) @ [1.0, 0.0] for ti in t])
    assert np.abs(ys - ref).max() < 1e-9
    assert n > 0


def test_dp54_backward_time():
    ys, _ = integrate(lambda t, y: -y, np.array([1.0]), [2.0, 1.0, 0.0], rtol=1e-12, atol=1e-14)
    assert ys[-1, 0] == pytest.approx(np.exp(2.0), rel=1e-10)


def test_dp54_check_and_underflow():
    def boom(t, y):
        if t > 0.5:
            raise IntegrationError("stop", t=t)

    with pytest.raises(IntegrationError):
        integrate(lambda t, y: y, np.array([1.0]), [0.0, 1.0], check=boom)
    with pytest.raises(IntegrationError):
        # finite-time blow-up at t = 1
        integrate(lambda t, y: y * y, np.array([1.0]), [0.0, 2.0])


def _rand_sys(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 1))
    C = rng.normal(size=(2, 2))
    Q = C @ C.T + 1e-3 * np.eye(2)
    r = float(rng.uniform(0.05, 5.0))
    return A, B, Q, r


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_care_against_scipy(seed):
    A, B, Q, r = _rand_sys(seed)
    G = B @ B.T / r
    X = care(A, G, Q)
    ref = sla.solve_continuous_are(A, B, Q, np.array([[r]]))
    # agreement degrades with conditioning (|X| / |Q|); the residual decides
    cond = max(1.0, np.linalg.norm(ref) / np.linalg.norm(Q))
    assert np.allclose(X, ref, rtol=1e-10 * cond + 1e-9, atol=1e-10 * np.abs(ref).max())
    res, res_ref = (np.linalg.norm(care_residual(A, G, Q, Y)) for Y in (X, ref))
    assert res <= max(10 * res_ref, 1e-12 * np.linalg.norm(Q))
    assert np.linalg.norm(care_residual(A, G, Q, X)) <= 1e-9 * max(1.0, np.linalg.norm(Q), np.linalg.norm(X))
    assert np.linalg.eigvals(A - G @ X).real.max() < 0


def test_care_unstabilizable_raises():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    G = np.diag([1.0, 0.0])  # second unstable direction not actuated
    with pytest.raises(RiccatiError):
        care(A, G, np.eye(2))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_lyap_against_scipy(seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(2, 2)) - 3 * np.eye(2)
    C = rng.normal(size=(2, 2))
    Q = C @ C.T
    X = lyap(L, Q)
    assert np.allclose(X, sla.solve_continuous_lyapunov(L, -Q), atol=1e-12 * max(1, np.abs(X).max()))


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
@settings(max_examples=200, deadline=None)
def test_expm2_against_scipy(seed, tau):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(2, 2))
    assert np.allclose(expm2(L, tau), sla.expm(L * tau), rtol=1e-10, atol=1e-12)


def test_expm2_degenerate_and_vectorized():
    J = np.array([[-1.0, 1.0], [0.0, -1.0]])  # defective: d = 0
    taus = np.array([0.0, 0.5, 2.0])
    out = expm2(J, taus)
    for k, t in enumerate(taus):
        assert np.allclose(out[k], sla.expm(J * t), atol=1e-14)
