"""Conditional covariance dynamics under continuous position measurement.

Each normal mode's conditional covariance obeys

    dS/dt = A S + S A^T + V - S M S,   M = C^T W^-1 C = diag(2 eta Gamma_ba, 0)

with the drift of :func:`parament.params.drift_matrix`.  States are kept as
three stored entries per block so symmetry holds by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import RiccatiError, care
from .ode import IntegrationError, integrate
from .params import PSD_TOL, CovBlock, SystemParams, TwoModeState, static_drift_matrix
from .timeseries import TimeSeries

log = logging.getLogger(__name__)


class PSDViolation(IntegrationError):
    """A covariance block left the PSD cone beyond tolerance."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 1 / 256
    samples_per_period: int = 256
    max_periods: int = 20000
    convergence_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-3:
                raise ValueError(f"{name} must lie in (0, 1e-3], got {v}")
        if int(self.samples_per_period) != self.samples_per_period or self.samples_per_period < 64:
            raise ValueError("samples_per_period must be an integer >= 64")
        if not 0 < self.max_step <= 1:
            raise ValueError("max_step is a fraction of the drive period in (0, 1]")
        if self.max_periods < 1:
            raise ValueError("max_periods must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")


@dataclass
class PeriodicSolution:
    samples: TimeSeries
    periods_to_converge: int
    residual: float
    converged: bool
    params: SystemParams = field(repr=False)

    @property
    def period(self):
        return self.params.period


# -- right-hand sides ------------------------------------------------------------


def _mode_coefficients(pn, t):
    """Spring constants (k+, k-) of the lower-left drift entries at time t."""
    g = pn.g0 + 2 * pn.g1 * math.cos(pn.omega_c * t)
    return pn.omega0, pn.omega0 + 4 * g


def _riccati_flat(t, y, pn, m, v):
    w = pn.omega0
    gam = pn.gamma
    k_plus, k_minus = _mode_coefficients(pn, t)
    out = np.empty(6)
    for j, k in ((0, k_plus), (3, k_minus)):
        a, b, c = y[j], y[j + 1], y[j + 2]
        out[j] = 2 * w * b - m * a * a
        out[j + 1] = w * c - k * a - gam * b - m * a * b
        out[j + 2] = -2 * k * b - 2 * gam * c + v - m * b * b
    return out


def riccati_rhs(state: TwoModeState, t, p: SystemParams) -> TwoModeState:
    """Time derivative of the conditional covariance (exactly symmetric)."""
    m = 2 * p.gamma_m
    y = _riccati_flat(t, state.as_array().ravel(), p, m, p.gamma_tot)
    return TwoModeState.from_array(y)


def _psd_check(t, y):
    b = y.reshape(-1, 3)
    det = b[:, 0] * b[:, 2] - b[:, 1] ** 2
    if (b[:, 0] < -PSD_TOL).any() or (b[:, 2] < -PSD_TOL).any() or (det < -PSD_TOL).any():
        raise PSDViolation(f"covariance left the PSD cone at t={t:.6g}", t=t)


def _sample_grid(pn, t0, n_periods, spp):
    T = pn.period
    return t0 + T * np.arange(n_periods * spp + 1) / spp


def _as_state_array(init):
    if isinstance(init, TwoModeState):
        return init.as_array().ravel()
    return np.asarray(init, dtype=float).ravel()


def integrate_conditional(
    init, p: SystemParams, cfg: IntegratorConfig | None = None, t0=0.0, n_periods=1
) -> TimeSeries:
    """Integrate the Riccati flow over ``n_periods`` drive periods.

    ``t0`` is in the time unit of ``p`` (seconds for physical parameters).
    The output is sampled ``cfg.samples_per_period`` times per period and
    includes both end points.
    """
    cfg = cfg or IntegratorConfig()
    y0 = _as_state_array(init)
    _psd_check(t0, y0)
    pn = p.normalized()
    scale = p.omega0
    tau = _sample_grid(pn, t0 * scale, n_periods, cfg.samples_per_period)
    m = 2 * pn.gamma_m
    v = pn.gamma_tot
    ys, _ = integrate(
        lambda t, y: _riccati_flat(t, y, pn, m, v),
        y0,
        tau,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step * pn.period,
        check=_psd_check,
    )
    return TimeSeries(tau / scale, ys[:, :3], ys[:, 3:], meta={"kind": "conditional"})


# -- steady states ---------------------------------------------------------------


def static_conditional_state(p: SystemParams) -> TwoModeState:
    """Stationary Riccati solution with the coupling frozen at g0."""
    m = 2 * p.gamma_m
    M = np.diag([m, 0.0])
    V = np.diag([0.0, p.gamma_tot])
    blocks = []
    for A in static_drift_matrix(p):
        S = care(A.T, M, V)
        blocks.append(CovBlock.from_matrix(S))
    return TwoModeState(*blocks)


def common_mode_steady_state(p: SystemParams) -> CovBlock:
    """Closed-form stationary common-mode conditional covariance."""
    w = p.omega0
    gm = p.gamma_m
    gt = p.gamma_tot
    gam = p.gamma
    root = math.sqrt(2 * gm * gt + w * w)
    if not gm > 0:
        raise ValueError("closed form needs a nonzero measurement rate")
    # rationalized: root - w and -gam + sqrt(gam^2 + x) both cancel badly
    x = 4 * w * gm * gt / (root + w)
    s11 = x / (2 * gm * (gam + math.sqrt(gam * gam + x)))
    s12 = gm * s11 * s11 / w
    s22 = (root / w - gm * gam * s11 / (w * w)) * s11
    return CovBlock(s11, s12, s22)


def _period_residual(prev, new):
    """Sup-norm entry change relative to the block Frobenius norm, worst mode."""
    res = 0.0
    for j in (0, 3):
        d = np.abs(new[j : j + 3] - prev[j : j + 3]).max()
        a, b, c = new[j : j + 3]
        norm = math.sqrt(a * a + 2 * b * b + c * c)
        res = max(res, d / norm if norm > 0 else d)
    return res


def _hamiltonian_monodromy(pn, t0, cfg):
    """One-period propagators of the linearized Riccati flow, per mode.

    With S = Y X^-1 the flow becomes linear, d[X; Y]/dt = [[-A^T, M], [V, A]]
    [X; Y], so the period map is the matrix Moebius transformation
    S -> (F21 + F22 S)(F11 + F12 S)^-1.
    """
    m = 2 * pn.gamma_m
    v = pn.gamma_tot
    w = pn.omega0
    gam = pn.gamma

    def rhs(t, y, mode):
        k = _mode_coefficients(pn, t)[mode]
        A = np.array([[0.0, w], [-k, -gam]])
        H = np.zeros((4, 4))
        H[:2, :2] = -A.T
        H[0, 2] = m
        H[3, 1] = v
        H[2:, 2:] = A
        return (H @ y.reshape(4, 4)).ravel()

    T = pn.period
    out = []
    for mode in (0, 1):
        ys, _ = integrate(
            lambda t, y: rhs(t, y, mode),
            np.eye(4).ravel(),
            [t0, t0 + T],
            rtol=min(cfg.rel_tol, 1e-11),
            atol=min(cfg.abs_tol, 1e-13),
            max_step=cfg.max_step * T,
        )
        out.append(ys[-1].reshape(4, 4))
    return out


def _moebius(F, S):
    num = F[2:, :2] + F[2:, 2:] @ S
    den = F[:2, :2] + F[:2, 2:] @ S
    out = np.linalg.solve(den.T, num.T).T
    return 0.5 * (out + out.T)


def _flat_to_mats(y):
    return [np.array([[y[j], y[j + 1]], [y[j + 1], y[j + 2]]]) for j in (0, 3)]


def _mats_to_flat(mats):
    return np.array([v for S in mats for v in (S[0, 0], S[0, 1], S[1, 1])])


def find_periodic_steady_state(
    p: SystemParams,
    cfg: IntegratorConfig | None = None,
    init=None,
    t0=0.0,
    method="monodromy",
) -> PeriodicSolution:
    """Iterate the one-period map of the Riccati flow to its fixed point.

    ``method="direct"`` integrates the nonlinear flow period by period;
    ``method="monodromy"`` evaluates the same map through the linearized
    Hamiltonian propagator computed once.  Either way the converged period
    is finally sampled by direct integration and the reported residual is the
    change over that last period.
    """
    cfg = cfg or IntegratorConfig()
    pn = p.normalized()
    tau0 = t0 * p.omega0
    if init is None:
        try:
            init = static_conditional_state(pn)
        except RiccatiError:
            init = TwoModeState(CovBlock.identity(0.5), CovBlock.identity(0.5))
    y = _as_state_array(init)
    n = 0
    residual = math.inf
    with np.errstate(all="ignore"):
        if method == "monodromy":
            Fs = _hamiltonian_monodromy(pn, tau0, cfg)
            mats = _flat_to_mats(y)
            while n < cfg.max_periods:
                new = [_moebius(F, S) for F, S in zip(Fs, mats)]
                n += 1
                y_new = _mats_to_flat(new)
                if not np.all(np.isfinite(y_new)):
                    log.warning("period map diverged after %d periods", n)
                    break
                residual = _period_residual(_mats_to_flat(mats), y_new)
                mats = new
                y = y_new
                if residual < 0.01 * cfg.convergence_tol:
                    break
        elif method == "direct":
            m = 2 * pn.gamma_m
            v = pn.gamma_tot
            T = pn.period
            while n < cfg.max_periods:
                ys, _ = integrate(
                    lambda t, s: _riccati_flat(t, s, pn, m, v),
                    y,
                    [tau0, tau0 + T],
                    rtol=cfg.rel_tol,
                    atol=cfg.abs_tol,
                    max_step=cfg.max_step * T,
                    check=_psd_check,
                )
                n += 1
                residual = _period_residual(y, ys[-1])
                y = ys[-1]
                if not np.all(np.isfinite(y)):
                    break
                if residual < cfg.convergence_tol:
                    break
        else:
            raise ValueError(f"unknown method {method!r}")

    if not np.all(np.isfinite(y)) or not TwoModeState.from_array(y).is_psd():
        bad = TimeSeries([t0], y[:3], y[3:], meta={"kind": "conditional"})
        return PeriodicSolution(bad, n, math.inf, False, p)
    samples = integrate_conditional(y, p, cfg, t0=t0, n_periods=1)
    last = _period_residual(
        np.concatenate([samples.plus[0], samples.minus[0]]),
        np.concatenate([samples.plus[-1], samples.minus[-1]]),
    )
    residual = max(last, residual if method == "direct" else 0.0)
    converged = residual <= cfg.convergence_tol
    if not converged:
        log.info("periodic steady state not converged: residual %.3e after %d periods", residual, n)
    samples.meta.update(periods=n, residual=residual, converged=converged)
    return PeriodicSolution(samples, n, residual, converged, p)


# -- first moments -------------------------------------------------------------------


@dataclass
class MeanTrajectory:
    """Ensemble of conditional first moments in the (x+, p+, x-, p-) basis."""

    t: np.ndarray
    X: np.ndarray
    u: np.ndarray
    params: SystemParams = field(repr=False)

    def second_moment(self):
        """Ensemble E[X X^T] at every recorded time, shape (n_t, 4, 4)."""
        return np.einsum("nti,ntj->tij", self.X, self.X) / self.X.shape[0]


def _periodic_blocks(periodic: PeriodicSolution, tau, scale):
    """Conditional blocks at normalized times ``tau`` by periodic linear interpolation."""
    s = periodic.samples
    T = periodic.params.period * scale
    t_s = s.t * scale
    phase = (tau - t_s[0]) % T + t_s[0]
    plus = np.stack([np.interp(phase, t_s, s.plus[:, i]) for i in range(3)], axis=-1)
    minus = np.stack([np.interp(phase, t_s, s.minus[:, i]) for i in range(3)], axis=-1)
    return plus, minus


def mean_trajectory(
    p: SystemParams,
    periodic: PeriodicSolution,
    gain=None,
    feedback=True,
    n_traj=1000,
    n_periods=5,
    seed=0,
    x0=None,
    steps_per_sample=4,
    record_every=None,
    noise=True,
) -> MeanTrajectory:
    """Euler-Maruyama sampling of the conditional mean.

    Wiener increments have variance dt/2; with feedback the control is
    u = -K X.  ``steps_per_sample`` sub-steps are taken per conditional
    sample, with the conditional covariance interpolated linearly in between.
    ``record_every`` (in steps) thins the stored trajectory.
    """
    if feedback and gain is None:
        raise ValueError("feedback enabled but no gain supplied")
    pn = p.normalized()
    scale = p.omega0
    spp = len(periodic.samples) - 1
    n_steps = n_periods * spp * steps_per_sample
    T = pn.period
    dt = T / (spp * steps_per_sample)
    record_every = record_every or steps_per_sample
    rng = np.random.default_rng(seed)
    X = np.zeros((n_traj, 4)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (n_traj, 4)).copy()
    if feedback:
        K = np.asarray(gain.rows(pn))
    else:
        K = np.zeros((2, 2))
    tau0 = periodic.samples.t[0] * scale
    taus = tau0 + dt * np.arange(n_steps + 1)
    sp, sm = _periodic_blocks(periodic, taus, scale)
    amp = 2 * math.sqrt(pn.gamma_m)
    t_rec, X_rec, u_rec = [], [], []

    def control(X):
        return np.stack([-(X[:, 0:2] @ K[0]), -(X[:, 2:4] @ K[1])], axis=-1)

    for i in range(n_steps + 1):
        u = control(X)
        if i % record_every == 0:
            t_rec.append(taus[i] / scale)
            X_rec.append(X.copy())
            u_rec.append(u)
        if i == n_steps:
            break
        _, k_minus = _mode_coefficients(pn, taus[i])
        dW = rng.normal(0.0, math.sqrt(dt / 2), size=(n_traj, 2)) if noise else np.zeros((n_traj, 2))
        Xn = X.copy()
        for j, (k, blk) in enumerate(((pn.omega0, sp[i]), (k_minus, sm[i]))):
            x = X[:, 2 * j]
            pr = X[:, 2 * j + 1]
            Xn[:, 2 * j] = x + pn.omega0 * pr * dt + amp * blk[0] * dW[:, j]
            Xn[:, 2 * j + 1] = (
                pr + (-k * x - pn.gamma * pr + u[:, j]) * dt + amp * blk[1] * dW[:, j]
            )
        X = Xn
    X_arr = np.stack(X_rec, axis=1)
    u_arr = np.stack(u_rec, axis=1) * scale
    return MeanTrajectory(np.array(t_rec), X_arr, u_arr, p)
