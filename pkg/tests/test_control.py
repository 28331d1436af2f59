import math

import numpy as np
import pytest

from parament import (
    CovBlock,
    TwoModeState,
    epr_cost_matrix,
    excess_noise_rhs,
    finite_horizon_gain,
    find_periodic_steady_state,
    lqr_cost_eval,
    log_negativity_series,
    mean_trajectory,
    period_average,
    periodic_excess_noise,
    solve_are_gain,
    unconditional_cov,
)
from parament.conditional import MeanTrajectory
from parament.control import B_MODE, cost_block
from parament.linalg import care, lyap
from parament.params import static_drift_matrix


def test_epr_cost_blocks():
    Pp, Pm = epr_cost_matrix(math.pi)
    assert np.allclose(Pp, [[0, 0], [0, 2]]) and np.allclose(Pm, [[2, 0], [0, 0]])
    assert np.allclose(epr_cost_matrix(0.0)[0], [[2, 0], [0, 0]])
    for th in np.linspace(-3, 3, 13):
        P = cost_block(th)
        assert abs(np.linalg.det(P)) < 1e-14 and np.trace(P) == pytest.approx(2.0)
        assert np.linalg.eigvalsh(P).min() > -1e-14


def test_are_gain_residual_and_stability(p2, gain2):
    assert gain2.residual < 1e-10
    for W in (gain2.omega_plus, gain2.omega_minus):
        assert np.allclose(W, W.T) and np.linalg.eigvalsh(W).min() > -1e-12
    assert gain2.is_stabilizing(p2)
    for L in gain2.closed_loop(p2):
        assert np.linalg.eigvals(L).real.max() < 0
    # the minus-mode closed-loop frequency is shifted away from omega_minus
    im = np.abs(np.linalg.eigvals(gain2.closed_loop(p2)[1]).imag).max()
    assert abs(im - p2.omega_minus) > 1e-3


def test_are_gain_physical_units_match(p2):
    phys = p2.denormalize()
    g = solve_are_gain(phys)
    assert g.residual < 1e-10 and g.is_stabilizing(phys)
    Kn = solve_are_gain(p2).rows(p2)
    Kp = g.rows(phys)
    assert np.allclose(Kp[1], Kn[1] * phys.omega0, rtol=1e-8)


def test_printed_transpose_form_is_not_stabilizing(p2):
    # A W + W A^T + P - W B B^T W / q = 0 with K = B^T W / q destabilizes the
    # minus mode; the adjoint form used by solve_are_gain does not
    A = static_drift_matrix(p2)[1]
    G = B_MODE @ B_MODE.T / p2.q_effort
    W = care(A.T, G, epr_cost_matrix(p2.theta_epr)[1])
    K = (B_MODE.T @ W) / p2.q_effort
    assert np.linalg.eigvals(A - B_MODE @ K).real.max() > 0


def test_large_effort_limit_is_lyapunov(p2):
    q = p2.replace(gamma=0.3, q_effort=1e9)
    g = solve_are_gain(q)
    assert np.abs(g.K_minus).max() < 1e-6
    A = static_drift_matrix(q)[1]
    ref = lyap(A.T, epr_cost_matrix(q.theta_epr)[1])
    assert np.allclose(g.omega_minus, ref, rtol=1e-6)


def test_zero_cost_zero_gain():
    A = np.array([[0.0, 1.0], [-1.0, -0.2]])
    X = care(A, B_MODE @ B_MODE.T / 0.1, np.zeros((2, 2)))
    assert np.allclose(X, 0, atol=1e-14)


def test_finite_horizon_from_are_is_constant(p2, gain2):
    ts = finite_horizon_gain(p2, 20.0, terminal=(gain2.omega_plus, gain2.omega_minus), n_samples=21)
    ref = CovBlock.from_matrix(gain2.omega_minus).as_array()
    assert np.abs(ts.minus - ref).max() < 1e-8 * np.abs(ref).max()


def test_finite_horizon_converges_to_are(p2, gain2):
    rate = min(abs(np.linalg.eigvals(L).real).min() for L in gain2.closed_loop(p2))
    ts = finite_horizon_gain(p2, 50.0 / rate, n_samples=11)
    for got, W in ((ts.plus[0], gain2.omega_plus), (ts.minus[0], gain2.omega_minus)):
        Wg = np.array([[got[0], got[1]], [got[1], got[2]]])
        assert np.linalg.norm(Wg - W) / np.linalg.norm(W) < 1e-6


def test_excess_rhs_homogeneous(p2, gain2):
    zero = TwoModeState(CovBlock(0, 0, 0), CovBlock(0, 0, 0))
    xi = TwoModeState(CovBlock(0.3, 0.1, 0.2), CovBlock(0.5, -0.2, 0.4))
    d = excess_noise_rhs(xi, 0.0, p2, gain2, zero, drift="static")
    for blk, dblk, L in zip((xi.plus, xi.minus), (d.plus, d.minus), gain2.closed_loop(p2)):
        assert np.allclose(dblk.matrix, L @ blk.matrix + blk.matrix @ L.T, atol=1e-14)


def test_excess_constant_source_lyapunov(p2, gain2):
    q = p2.replace(g1=0.0)
    sol = find_periodic_steady_state(q)
    ex = periodic_excess_noise(q, sol, gain2, drift="static")
    assert ex.converged
    M = np.diag([2 * q.gamma_m, 0.0])
    for got, blk, L in zip((ex.samples.plus[-1], ex.samples.minus[-1]),
                           (sol.samples.plus[0], sol.samples.minus[0]), gain2.closed_loop(q)):
        S = np.array([[blk[0], blk[1]], [blk[1], blk[2]]])
        ref = lyap(L, S @ M @ S)
        assert np.allclose(got, [ref[0, 0], ref[0, 1], ref[1, 1]], rtol=1e-6)


def test_excess_psd_and_ordering(p2, periodic2, excess2):
    xi = excess2.samples
    assert excess2.converged
    assert xi.min_eigenvalue() >= -1e-10
    u = excess2.unconditional
    # Sigma - Sigma_c = Xi >= 0 elementwise in the PSD order
    diff = u + TimeSeries_neg(excess2.conditional)
    assert diff.min_eigenvalue() >= -1e-10
    assert np.allclose(excess2.conditional.minus, periodic2.samples.minus, rtol=1e-7)


def TimeSeries_neg(ts):
    from parament import TimeSeries

    return TimeSeries(ts.t, -ts.plus, -ts.minus)


def test_unconditional_cov_examples():
    sc = TwoModeState(CovBlock(1.0, 0.2, 0.8), CovBlock(0.7, 0.0, 1.5))
    zero = TwoModeState(CovBlock(0, 0, 0), CovBlock(0, 0, 0))
    assert np.allclose(unconditional_cov(sc, zero).as_array(), sc.as_array())
    eps = 0.05
    s = unconditional_cov(sc, TwoModeState(CovBlock.identity(eps), CovBlock.identity(eps)))
    assert np.allclose(s.minus.eigvals(), sc.minus.eigvals() + eps)


def test_lqr_cost_basics(p2, periodic2, gain2):
    tr = mean_trajectory(p2, periodic2, feedback=False, n_traj=4, n_periods=1, noise=False)
    assert lqr_cost_eval(tr, p2) == 0.0
    tr = mean_trajectory(p2, periodic2, gain2, n_traj=50, n_periods=2, seed=3)
    js, ju = lqr_cost_eval(tr, p2, components=True)
    from parament import SystemParams

    d = p2.to_dict()
    d.pop("omega0_si", None)
    doubled = SystemParams(**{**d, "omega0": 2.0})
    js2, ju2 = lqr_cost_eval(tr, doubled, components=True)
    assert js2 == pytest.approx(2 * js, rel=1e-12) and ju2 == pytest.approx(ju, rel=1e-12)
    with pytest.raises(ValueError):
        lqr_cost_eval(MeanTrajectory(np.zeros(0), np.zeros((0, 0, 4)), np.zeros((0, 0, 2)), p2), p2)


def test_optimal_gain_beats_no_feedback(p2, periodic2, gain2):
    kw = dict(n_traj=1000, n_periods=10, seed=42)
    fb = mean_trajectory(p2, periodic2, gain2, feedback=True, **kw)
    free = mean_trajectory(p2, periodic2, gain2, feedback=False, **kw)
    assert lqr_cost_eval(fb, p2) < lqr_cost_eval(free, p2)


def test_monte_carlo_second_moment_matches_xi(p2, periodic2, gain2, excess2):
    tr = mean_trajectory(p2, periodic2, gain2, n_traj=10000, n_periods=15, seed=123)
    m2 = tr.second_moment()[-257:]
    xi = excess2.samples
    for j, blocks in enumerate((xi.plus, xi.minus)):
        est = np.stack([m2[:, 2 * j, 2 * j], m2[:, 2 * j, 2 * j + 1], m2[:, 2 * j + 1, 2 * j + 1]], -1)
        scale = np.abs(blocks).max()
        # Euler-Maruyama bias plus ~1% sampling error on 1e4 paths
        assert np.abs(est.mean(0) - blocks.mean(0)).max() < 0.05 * scale


def test_static_vs_full_drift_gap_shrinks_with_effort(p2):
    # the signed gap crosses zero near the default effort, so the trend is
    # checked in the small-effort regime
    sol = find_periodic_steady_state(p2)
    gaps = []
    for f in (1 / 4, 1 / 8, 1 / 16, 1 / 32):
        pq = p2.replace(q_effort=p2.q_effort * f)
        g = solve_are_gain(pq)
        avgs = []
        for drift in ("full", "static"):
            u = periodic_excess_noise(pq, sol, g, drift=drift).unconditional
            avgs.append(period_average(log_negativity_series(u.plus, u.minus), u.t, p2.period))
        gaps.append(abs(avgs[0] - avgs[1]))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
