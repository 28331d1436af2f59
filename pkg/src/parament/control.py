"""LQR feedback stack and the unconditional (conditional + excess) covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditional import (
    IntegratorConfig,
    PeriodicSolution,
    _mode_coefficients,
    _period_residual,
    _psd_check,
    _sample_grid,
)
from .linalg import RiccatiError, care, care_residual
from .ode import integrate
from .params import CovBlock, SystemParams, TwoModeState, static_drift_matrix
from .timeseries import TimeSeries

B_MODE = np.array([[0.0], [1.0]])


def cost_block(theta):
    """P(theta) = [[1 + cos, sin], [sin, 1 - cos]]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1 + c, s], [s, 1 - c]])


def epr_cost_matrix(theta, omega0=1.0):
    """Per-mode EPR cost blocks (Omega0 P(theta), Omega0 P(theta + pi))."""
    return omega0 * cost_block(theta), omega0 * cost_block(theta + math.pi)


def cost_matrix_4x4(theta, omega0=1.0):
    P_plus, P_minus = epr_cost_matrix(theta, omega0)
    out = np.zeros((4, 4))
    out[:2, :2] = P_plus
    out[2:, 2:] = P_minus
    return out


@dataclass(frozen=True)
class FeedbackGain:
    """Per-mode Riccati gain matrices and the resulting feedback rows.

    ``omega_plus``/``omega_minus`` are dimensionless, so the same object
    serves physical and normalized parameter sets; :meth:`rows` forms
    K = B^T Omega / q for the units of the parameters passed in.
    """

    omega_plus: np.ndarray = field(repr=False)
    omega_minus: np.ndarray = field(repr=False)
    q_effort: float
    residual: float = 0.0

    @property
    def K_plus(self):
        return (B_MODE.T @ self.omega_plus).ravel() / self.q_effort

    @property
    def K_minus(self):
        return (B_MODE.T @ self.omega_minus).ravel() / self.q_effort

    def rows(self, p: SystemParams | None = None):
        q = self.q_effort if p is None else p.q_effort
        return (
            (B_MODE.T @ self.omega_plus).ravel() / q,
            (B_MODE.T @ self.omega_minus).ravel() / q,
        )

    def closed_loop(self, p: SystemParams):
        """Static closed-loop blocks A - B K (coupling frozen at g0)."""
        Kp, Km = self.rows(p)
        A_plus, A_minus = static_drift_matrix(p)
        return A_plus - B_MODE @ Kp[None, :], A_minus - B_MODE @ Km[None, :]

    def is_stabilizing(self, p):
        return all(np.linalg.eigvals(L).real.max() < 0 for L in self.closed_loop(p))


def solve_are_gain(p: SystemParams) -> FeedbackGain:
    """Stabilizing solution of A^T W + W A + P - W B B^T W / q = 0 per mode."""
    G = B_MODE @ B_MODE.T / p.q_effort
    P_blocks = epr_cost_matrix(p.theta_epr, p.omega0)
    sols = []
    residual = 0.0
    for name, A, P in zip(("plus", "minus"), static_drift_matrix(p), P_blocks):
        try:
            W = care(A, G, P)
        except RiccatiError as exc:
            raise RiccatiError(f"no stabilizing gain for the {name} mode: {exc}") from exc
        res = np.linalg.norm(care_residual(A, G, P, W)) / np.linalg.norm(P)
        residual = max(residual, res)
        sols.append(W)
    return FeedbackGain(sols[0], sols[1], p.q_effort, residual)


def _block_flow(l11, l12, l21, l22, a, b, c):
    """Stored entries of L S + S L^T for S = [[a, b], [b, c]]."""
    return (
        2 * (l11 * a + l12 * b),
        l21 * a + (l11 + l22) * b + l12 * c,
        2 * (l21 * b + l22 * c),
    )


def finite_horizon_gain(
    p: SystemParams,
    horizon,
    terminal=None,
    n_samples=401,
    cfg: IntegratorConfig | None = None,
    modulated=False,
) -> TimeSeries:
    """Integrate the backward gain Riccati flow from ``t = horizon`` to 0.

    -dW/dt = A^T W + W A + P - W B B^T W / q.  ``terminal`` is a pair of 2x2
    matrices (zero by default).  With ``modulated`` the full A(t) is used,
    otherwise the static drift.  Returned blocks are W(t) on an ascending
    grid from 0 to ``horizon`` (time unit of ``p``).
    """
    cfg = cfg or IntegratorConfig()
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    pn = p.normalized()
    scale = p.omega0
    P_plus, P_minus = epr_cost_matrix(pn.theta_epr, 1.0)
    Ps = (P_plus, P_minus)
    inv_q = 1.0 / pn.q_effort
    w = pn.omega0
    gam = pn.gamma

    def rhs(t, y):
        if modulated:
            ks = _mode_coefficients(pn, t)
        else:
            ks = (w, w + 4 * pn.g0)
        out = np.empty(6)
        for j, (k, P) in enumerate(zip(ks, Ps)):
            a, b, c = y[3 * j : 3 * j + 3]
            # L = A^T = [[0, -k], [w, -gam]]
            f11, f12, f22 = _block_flow(0.0, -k, w, -gam, a, b, c)
            out[3 * j] = -(f11 + P[0, 0] - inv_q * b * b)
            out[3 * j + 1] = -(f12 + P[0, 1] - inv_q * b * c)
            out[3 * j + 2] = -(f22 + P[1, 1] - inv_q * c * c)
        return out

    if terminal is None:
        y0 = np.zeros(6)
    else:
        y0 = np.concatenate([CovBlock.from_matrix(m).as_array() for m in terminal])
    H = horizon * scale
    tau = np.linspace(H, 0.0, n_samples)
    ys, _ = integrate(rhs, y0, tau, rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=H / 50)
    ys = ys[::-1]
    return TimeSeries(tau[::-1] / scale, ys[:, :3], ys[:, 3:], meta={"kind": "gain"})


# -- excess noise --------------------------------------------------------------


def excess_noise_rhs(
    xi: TwoModeState, t, p: SystemParams, gain: FeedbackGain, sigma_c: TwoModeState, drift="full"
) -> TwoModeState:
    """dXi/dt = (A - B K) Xi + Xi (A - B K)^T + S_c M S_c per mode."""
    y = np.concatenate([sigma_c.as_array().ravel(), xi.as_array().ravel()])
    K = gain.rows(p)
    d = _excess_flat(t, y, p, K, drift)
    return TwoModeState.from_array(d)


def _excess_flat(t, y, pn, K, drift):
    """Derivative of the Xi part of the joint (Sigma_c, Xi) state."""
    m = 2 * pn.gamma_m
    w = pn.omega0
    if drift == "full":
        ks = _mode_coefficients(pn, t)
    elif drift == "static":
        ks = (w, w + 4 * pn.g0)
    else:
        raise ValueError(f"unknown drift {drift!r}")
    out = np.empty(6)
    for j in (0, 1):
        s11, s12 = y[3 * j], y[3 * j + 1]
        a, b, c = y[6 + 3 * j : 9 + 3 * j]
        Kj = K[j]
        f11, f12, f22 = _block_flow(0.0, w, -ks[j] - Kj[0], -pn.gamma - Kj[1], a, b, c)
        out[3 * j] = f11 + m * s11 * s11
        out[3 * j + 1] = f12 + m * s11 * s12
        out[3 * j + 2] = f22 + m * s12 * s12
    return out


def _joint_rhs(pn, K, drift):
    from .conditional import _riccati_flat

    m = 2 * pn.gamma_m
    v = pn.gamma_tot

    def rhs(t, y):
        out = np.empty(12)
        out[:6] = _riccati_flat(t, y[:6], pn, m, v)
        out[6:] = _excess_flat(t, y, pn, K, drift)
        return out

    return rhs


@dataclass
class ExcessNoise:
    samples: TimeSeries
    conditional: TimeSeries
    periods: int
    residual: float
    converged: bool
    initial: TwoModeState

    @property
    def unconditional(self) -> TimeSeries:
        return self.conditional + self.samples


def integrate_excess_noise(
    p: SystemParams,
    periodic: PeriodicSolution,
    gain: FeedbackGain,
    xi0: TwoModeState | None = None,
    n_periods=1,
    cfg: IntegratorConfig | None = None,
    drift="full",
):
    """Integrate Xi jointly with the periodic conditional covariance.

    Starts at the first sample of ``periodic`` with Xi(t0) = ``xi0`` (zero by
    default).  Returns (Xi samples, conditional samples) on a common grid.
    """
    cfg = cfg or IntegratorConfig()
    pn = p.normalized()
    scale = p.omega0
    K = gain.rows(pn)
    s0 = np.concatenate([periodic.samples.plus[0], periodic.samples.minus[0]])
    x0 = np.zeros(6) if xi0 is None else xi0.as_array().ravel()
    tau0 = periodic.samples.t[0] * scale
    tau = _sample_grid(pn, tau0, n_periods, cfg.samples_per_period)
    ys, _ = integrate(
        _joint_rhs(pn, K, drift),
        np.concatenate([s0, x0]),
        tau,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step * pn.period,
        check=_psd_check,
    )
    t = tau / scale
    xi = TimeSeries(t, ys[:, 6:9], ys[:, 9:12], meta={"kind": "excess_noise", "drift": drift})
    cond = TimeSeries(t, ys[:, 0:3], ys[:, 3:6], meta={"kind": "conditional"})
    return xi, cond


def periodic_excess_noise(
    p: SystemParams,
    periodic: PeriodicSolution,
    gain: FeedbackGain,
    cfg: IntegratorConfig | None = None,
    drift="full",
    xi0: TwoModeState | None = None,
    max_periods=400,
) -> ExcessNoise:
    """Run Xi from ``xi0`` (zero) until its one-period map converges."""
    cfg = cfg or IntegratorConfig()
    initial = xi0 or TwoModeState(CovBlock(0, 0, 0), CovBlock(0, 0, 0))
    xi = initial
    n = 0
    residual = math.inf
    while True:
        xs, cs = integrate_excess_noise(p, periodic, gain, xi, 1, cfg, drift)
        n += 1
        end = np.concatenate([xs.plus[-1], xs.minus[-1]])
        start = np.concatenate([xs.plus[0], xs.minus[0]])
        residual = _period_residual(start, end)
        xi = TwoModeState.from_array(end)
        if (residual < cfg.convergence_tol and n > 1) or n >= max_periods or not np.isfinite(residual):
            break
    converged = bool(residual < cfg.convergence_tol)
    xs.meta.update(periods=n, residual=residual, converged=converged)
    return ExcessNoise(xs, cs, n, residual, converged, initial)


def unconditional_cov(sigma_c, xi):
    """Sigma = Sigma_c + Xi for TwoModeState or TimeSeries arguments."""
    return sigma_c + xi


def lqr_cost_eval(traj, p: SystemParams, components=False):
    """Monte-Carlo estimate of the LQR cost integral over the recorded window.

    ``traj`` is a :class:`parament.conditional.MeanTrajectory`; the integrand
    E[X^T P X + q u^T u] is averaged over the ensemble and integrated with
    the trapezoid rule in the time unit of ``p``.
    """
    if traj.X.shape[0] == 0 or traj.X.shape[1] < 2:
        raise ValueError("empty trajectory ensemble")
    P = cost_matrix_4x4(p.theta_epr, p.omega0)
    state = np.einsum("nti,ij,ntj->t", traj.X, P, traj.X) / traj.X.shape[0]
    effort = p.q_effort * np.einsum("ntk,ntk->t", traj.u, traj.u) / traj.X.shape[0]
    js = float(np.trapezoid(state, traj.t))
    ju = float(np.trapezoid(effort, traj.t))
    if components:
        return js, ju
    return js + ju
