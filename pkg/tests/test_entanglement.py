import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parament import CovBlock, InconsistentBlocks, log_negativity, period_average, symplectic_nu
from parament.analytics import closed_form_negativity
from parament.entanglement import log_negativity_series

from helpers import random_psd_block


def tms(r):
    return (
        CovBlock(math.exp(2 * r) / 2, 0.0, math.exp(-2 * r) / 2),
        CovBlock(math.exp(-2 * r) / 2, 0.0, math.exp(2 * r) / 2),
    )


def test_vacuum():
    rep = log_negativity(CovBlock.identity(0.5), CovBlock.identity(0.5))
    assert rep.nu_tilde == pytest.approx(0.5, abs=1e-15)
    assert rep.log_neg == pytest.approx(0.0, abs=1e-14)
    assert not rep.entangled


@pytest.mark.parametrize("r", np.linspace(0, 3, 13))
def test_two_mode_squeezed(r):
    plus, minus = tms(r)
    assert symplectic_nu(plus, minus) == pytest.approx(math.exp(-2 * r) / 2, rel=1e-12)
    assert abs(log_negativity(plus, minus).log_neg - 2 * r) < 1e-12


@pytest.mark.parametrize("n", [0.0, 0.3, 2.0])
def test_thermal_separable(n):
    rep = log_negativity(CovBlock.identity(n + 0.5), CovBlock.identity(n + 0.5))
    assert rep.nu_tilde == pytest.approx(n + 0.5)
    assert rep.log_neg == pytest.approx(-math.log(2 * n + 1))
    assert rep.log_neg <= 0


def test_inconsistent_blocks_raise():
    with pytest.raises(InconsistentBlocks):
        symplectic_nu(CovBlock(1.0, 1.0, 1.0), CovBlock.identity(0.5))
    with pytest.raises(InconsistentBlocks):
        symplectic_nu(CovBlock(-1.0, 0.0, -1.0), CovBlock.identity(0.5))


def test_roundoff_radicand_is_clipped():
    # equal-determinant product states sit exactly at sigma^2 = 4 d1 d2
    for r in (0.0, 1e-9, 0.3):
        b = CovBlock(math.exp(2 * r) / 2, 0.0, math.exp(-2 * r) / 2)
        rep = log_negativity(b, b)
        assert math.isfinite(rep.log_neg)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    P = np.array([random_psd_block(rng) for _ in range(50)])
    M = np.array([random_psd_block(rng) for _ in range(50)])
    vec = log_negativity_series(P, M)
    ref = [log_negativity(CovBlock(*a), CovBlock(*b)).log_neg for a, b in zip(P, M)]
    assert np.allclose(vec, ref, rtol=0, atol=1e-14)


def test_identical_random_modes_not_entangled():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        b = random_psd_block(rng, scale=rng.uniform(0.2, 3))
        # physical single-mode states have det >= 1/4
        b = b * max(1.0, 0.5 / math.sqrt(b[0] * b[2] - b[1] ** 2))
        assert log_negativity(CovBlock(*b), CovBlock(*b)).log_neg <= 1e-12


@given(
    st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.05, 5), st.floats(1.01, 4)
)
@settings(max_examples=300, deadline=None)
def test_diagonal_exchange_symmetry_and_scaling(a, b, c, d, k):
    P, M = CovBlock(a, 0, b), CovBlock(c, 0, d)
    assert symplectic_nu(P, M) == pytest.approx(symplectic_nu(M, P), rel=1e-14)
    e1 = log_negativity(P, M).log_neg
    e2 = log_negativity(CovBlock(k * a, 0, k * b), CovBlock(k * c, 0, k * d)).log_neg
    assert e2 < e1


def test_period_average(p2):
    T = p2.period
    t = np.linspace(0, T, 257)
    assert period_average(np.full_like(t, 3.2), t, T) == pytest.approx(3.2)
    s2 = np.sin(p2.omega_minus * t - math.pi / 4) ** 2
    assert period_average(s2, t, T) == pytest.approx(0.5, abs=1e-12)
    en = closed_form_negativity(p2, t)
    avg = period_average(en, t, T)
    assert en.min() < avg < en.max()
    with pytest.raises(ValueError):
        period_average(s2, t * 1.01, T)
    with pytest.raises(ValueError):
        period_average(s2[:10], t[:10], T)
    with pytest.raises(ValueError):
        period_average(s2, np.sort(np.r_[t[:-2], T * 0.999, T]), T)
