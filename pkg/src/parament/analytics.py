"""Semi-analytic parametric-resonance model of the differential mode.

Near Omega_c = 2 Omega_-, the undamped differential mode is a Mathieu
oscillator whose Floquet solutions split into a diverging and a decaying
mode.  The conditional covariance is approximated as a weighted sum of the
two modes' outer products, with weights fixed by the competition between
parametric gain and measurement, and by the determinant fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditional import IntegratorConfig
from .entanglement import log_negativity, log_negativity_series
from .linalg import expm2
from .ode import integrate
from .params import CovBlock, SystemParams, eigenfrequencies

H_APPLICABLE_MAX = 0.5


class OutsideWindow(ValueError):
    """The drive frequency lies outside the parametric resonance window."""


def mathieu_params(p: SystemParams):
    """Modulation depth h = 8 Omega0 g1 / Omega_-^2 and detuning eps."""
    _, om = eigenfrequencies(p)
    h = 8 * p.omega0 * p.g1 / om**2
    eps = p.omega_c / om - 2
    return h, eps


def mathieu_exponent(h, eps, omega_minus):
    """Growth rate of the diverging second moment, or None outside the window."""
    arg = h * h / 4 - eps * eps
    if arg < 0:
        return None
    return omega_minus * math.sqrt(arg)


def relative_phase(h, eps):
    if not abs(eps) < h / 2:
        raise OutsideWindow(f"eps={eps:.4g} outside (-h/2, h/2) with h={h:.4g}")
    return math.atan(math.sqrt((h - 2 * eps) / (h + 2 * eps)))


@dataclass(frozen=True)
class MathieuModel:
    h: float
    eps: float
    mu: float
    phi: float
    alpha_div: float
    alpha_dec: float
    in_window: bool

    @property
    def applicable(self):
        """Whether the analytic outputs should be trusted for this point."""
        return self.in_window and self.mu > 0 and self.h <= H_APPLICABLE_MAX


def mathieu_model(p: SystemParams) -> MathieuModel:
    h, eps = mathieu_params(p)
    om = p.omega_minus
    mu = mathieu_exponent(h, eps, om)
    in_window = mu is not None and mu > 0 and abs(eps) < h / 2
    if not in_window:
        return MathieuModel(h, eps, mu or 0.0, math.nan, math.nan, math.nan, False)
    phi = relative_phase(h, eps)
    model = MathieuModel(h, eps, mu, phi, math.nan, math.nan, True)
    a_div, a_dec = mode_amplitudes(p, model)
    return MathieuModel(h, eps, mu, phi, a_div, a_dec, True)


def resonance_window(p: SystemParams):
    """Drive frequencies (low, high) bounding the first resonance tongue."""
    om = p.omega_minus
    half = 4 * p.omega0 * p.g1 / om
    return 2 * om - half, 2 * om + half


def in_resonance_window(p: SystemParams):
    lo, hi = resonance_window(p)
    return lo < p.omega_c < hi


@dataclass(frozen=True)
class FloquetResult:
    monodromy: np.ndarray
    multipliers: np.ndarray
    mu_numeric: float
    det: float


def floquet_monodromy(p: SystemParams, cfg: IntegratorConfig | None = None) -> FloquetResult:
    """One-period propagator of the undamped differential mode.

    ``mu_numeric = 2 ln|lambda_max| / T`` is the growth rate of the second
    moments X X^T, which is the quantity the analytic exponent describes.
    Damping is not included (the Mathieu system is homogeneous and lossless).
    """
    cfg = cfg or IntegratorConfig()
    pn = p.normalized()
    w = pn.omega0

    def rhs(t, y):
        k = w + 4 * (pn.g0 + 2 * pn.g1 * math.cos(pn.omega_c * t))
        F = y.reshape(2, 2)
        return np.array([w * F[1, 0], w * F[1, 1], -k * F[0, 0], -k * F[0, 1]])

    T = pn.period
    ys, _ = integrate(
        rhs,
        np.eye(2).ravel(),
        [0.0, T],
        rtol=min(cfg.rel_tol, 1e-12),
        atol=min(cfg.abs_tol, 1e-14),
        max_step=cfg.max_step * T,
    )
    M = ys[-1].reshape(2, 2)
    lam = np.linalg.eigvals(M)
    mu_num = 2 * math.log(np.abs(lam).max()) / T * p.omega0
    return FloquetResult(M, lam, mu_num, float(np.linalg.det(M)))


def mode_vectors(model: MathieuModel, p: SystemParams, t):
    """Envelope-free diverging and decaying Floquet vectors (x, p) at time t.

    Array ``t`` gives arrays of shape (n, 2).
    """
    if not model.in_window:
        raise OutsideWindow("mode vectors are defined only inside the resonance window")
    t = np.asarray(t, dtype=float)
    arg = 0.5 * p.omega_c * t
    r = p.omega_c / (2 * p.omega0)
    x_div = np.stack([np.cos(arg + model.phi), -r * np.sin(arg + model.phi)], axis=-1)
    x_dec = np.stack([np.cos(arg - model.phi), -r * np.sin(arg - model.phi)], axis=-1)
    return x_div, x_dec


def mode_amplitudes(p: SystemParams, model: MathieuModel, literal=False):
    """(alpha_div, alpha_dec) from gain/measurement balance and the determinant.

    ``literal=True`` keeps an extra 1/eta in alpha_dec, the printed form,
    which only satisfies the determinant identity at eta = 1.
    """
    if not model.in_window or not model.mu > 0:
        raise OutsideWindow("mode amplitudes need a real positive Mathieu exponent")
    a_div = model.mu / p.gamma_m
    s2 = math.sin(2 * model.phi) ** 2
    # fixed by the determinant: a_div a_dec (Oc/2O0)^2 sin^2(2phi) = D
    a_dec = 2 * (p.omega0 / p.omega_c) ** 2 * p.gamma_tot / (model.mu * s2)
    if literal:
        a_dec /= p.eta
    return a_div, a_dec


def determinant_fixed_point(p: SystemParams):
    """Stationary conditional determinant (Gamma_th + Gamma_ba) / (2 eta Gamma_ba)."""
    return p.gamma_tot / (2 * p.gamma_m)


def conditional_cov_approx(p: SystemParams, model: MathieuModel, t):
    """Approximate differential-mode conditional covariance.

    Scalar ``t`` returns a CovBlock, array ``t`` stored blocks (n, 3).
    """
    if not model.in_window:
        raise OutsideWindow("approximation defined only inside the resonance window")
    a_div, a_dec = model.alpha_div, model.alpha_dec
    if not (np.isfinite(a_div) and np.isfinite(a_dec)):
        a_div, a_dec = mode_amplitudes(p, model)
    xd, xc = mode_vectors(model, p, t)
    s11 = a_div * xd[..., 0] ** 2 + a_dec * xc[..., 0] ** 2
    s12 = a_div * xd[..., 0] * xd[..., 1] + a_dec * xc[..., 0] * xc[..., 1]
    s22 = a_div * xd[..., 1] ** 2 + a_dec * xc[..., 1] ** 2
    if np.ndim(t) == 0:
        return CovBlock(float(s11), float(s12), float(s22))
    return np.stack([s11, s12, s22], axis=-1)


def common_mode_approx(p: SystemParams) -> CovBlock:
    """Weak-measurement common-mode block: sqrt(D) on the diagonal."""
    s = math.sqrt(determinant_fixed_point(p))
    return CovBlock(s, 0.0, s)


def static_differential_approx(p: SystemParams) -> CovBlock:
    """Weak-measurement differential block without modulation.

    Free-oscillator ellipse of area D with x/p aspect Omega0/Omega_-.
    """
    s = math.sqrt(determinant_fixed_point(p))
    r = p.omega0 / p.omega_minus
    return CovBlock(s * r, 0.0, s / r)


def _require_resonance(p, rtol=1e-9):
    if abs(p.omega_c - 2 * p.omega_minus) > rtol * p.omega_c:
        raise OutsideWindow("closed form holds only at exact resonance omega_c = 2 Omega_-")


def lambda2_closed_form(p: SystemParams, t):
    """Smaller eigenvalue of the approximate differential block at resonance."""
    _require_resonance(p)
    om = p.omega_minus
    t = np.asarray(t, dtype=float)
    return p.gamma_tot / (8 * p.g1 * om) * (p.omega0 + 4 * p.g0 * np.sin(om * t - math.pi / 4) ** 2)


def closed_form_negativity(p: SystemParams, t):
    """Compact conditional E_N(t) at exact resonance."""
    _require_resonance(p)
    if not p.g1 > 0:
        raise OutsideWindow("closed form needs g1 > 0")
    om = p.omega_minus
    D = determinant_fixed_point(p)
    t = np.asarray(t, dtype=float)
    second = (
        p.gamma_tot / (2 * p.g1) * (p.omega0 / om)
        * (1 + 4 * p.g0 / p.omega0 * np.sin(om * t - math.pi / 4) ** 2)
    )
    out = -0.5 * np.log(math.sqrt(D)) - 0.5 * np.log(second)
    return float(out) if out.ndim == 0 else out


def static_negativity(p: SystemParams):
    """Quoted closed form for the unmodulated attractive case."""
    if not p.g0 > 0:
        raise ValueError("static closed form is stated for attractive coupling g0 > 0")
    D = determinant_fixed_point(p)
    return -0.5 * math.log(math.sqrt(D)) - 0.5 * math.log(2 * p.omega0 / p.omega_minus * math.sqrt(D))


def static_negativity_pipeline(p: SystemParams):
    """Static E_N from the same weak-measurement blocks via the symplectic formula."""
    return log_negativity(common_mode_approx(p), static_differential_approx(p)).log_neg


def analytic_conditional_negativity(p: SystemParams, t, model: MathieuModel | None = None):
    """E_N(t) of (common_mode_approx, conditional_cov_approx) for any in-window drive."""
    model = model or mathieu_model(p)
    minus = conditional_cov_approx(p, model, np.atleast_1d(t))
    plus = np.broadcast_to(common_mode_approx(p).as_array(), minus.shape)
    out = log_negativity_series(plus, minus)
    return float(out[0]) if np.ndim(t) == 0 else out


# -- excess noise from the static closed loop ---------------------------------------


def analytic_source(p: SystemParams, model: MathieuModel | None = None):
    """Default Sigma_c(t) source: analytic common and differential blocks."""
    model = model or mathieu_model(p)
    plus = common_mode_approx(p).as_array()

    def source(t):
        minus = conditional_cov_approx(p, model, np.atleast_1d(t))
        return np.broadcast_to(plus, minus.shape), minus

    return source


def _innovation(blocks, m):
    """Stored entries of S M S with M = diag(m, 0)."""
    a, b = blocks[..., 0], blocks[..., 1]
    return np.stack([m * a * a, m * a * b, m * b * b], axis=-1)


def analytic_excess_noise(
    p: SystemParams,
    gain,
    t,
    source=None,
    t0=None,
    nodes_per_period=256,
    decay_tol=1e-14,
):
    """Excess noise of the static closed loop driven by the conditional source.

    Xi(t) = ∫_{t0}^{t} e^{L(t-s)} S_c(s) M S_c(s) e^{L^T(t-s)} ds, which is the
    variation-of-constants solution with Xi(t0) = 0.  When ``t0`` is omitted
    it is pushed back until the homogeneous part has decayed below
    ``decay_tol``, giving the periodic steady state.  Quadrature is composite
    Simpson with at least ``nodes_per_period`` nodes per drive period.
    Returns stored blocks (plus, minus), each of shape (len(t), 3).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    source = source or analytic_source(p)
    loops = gain.closed_loop(p)
    rates = [np.linalg.eigvals(L).real.max() for L in loops]
    if max(rates) >= 0:
        raise ValueError("closed loop is not Hurwitz")
    T = p.period
    if t0 is None:
        span = math.log(decay_tol) / (2 * max(rates))
        t0 = t.min() - span
    m = 2 * p.gamma_m

    def segment(a, b):
        # Simpson estimate of the convolution over [a, b], evaluated at b
        n = max(2, int(math.ceil((b - a) / T * nodes_per_period)))
        n += n % 2
        s = np.linspace(a, b, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2] = 4
        w[2:-1:2] = 2
        w *= (s[1] - s[0]) / 3
        blocks = source(s)
        res = []
        for j in (0, 1):
            Q = _innovation(np.asarray(blocks[j]), m)
            E = expm2(loops[j], b - s)
            Qm = np.empty((len(s), 2, 2))
            Qm[:, 0, 0] = Q[:, 0]
            Qm[:, 0, 1] = Qm[:, 1, 0] = Q[:, 1]
            Qm[:, 1, 1] = Q[:, 2]
            X = np.einsum("n,nij,njk,nlk->il", w, E, Qm, E)
            res.append(0.5 * (X + X.T))
        return res

    # march through the sorted times: Xi(b) = E Xi(a) E^T + segment(a, b)
    order = np.argsort(t, kind="stable")
    out = [np.zeros((len(t), 3)), np.zeros((len(t), 3))]
    cur = [np.zeros((2, 2)), np.zeros((2, 2))]
    prev = t0
    for i in order:
        ti = t[i]
        if ti > prev:
            inc = segment(prev, ti)
            for j in (0, 1):
                E = expm2(loops[j], ti - prev)
                cur[j] = E @ cur[j] @ E.T + inc[j]
            prev = ti
        for j in (0, 1):
            X = cur[j]
            out[j][i] = (X[0, 0], X[0, 1], X[1, 1])
    return out[0], out[1]


# -- geometry and diagnostics ------------------------------------------------------


@dataclass(frozen=True)
class Ellipse:
    major: float
    minor: float
    angle: float
    major_axis: np.ndarray
    minor_axis: np.ndarray


def noise_ellipse(block: CovBlock) -> Ellipse:
    """Semi-axes sqrt(eigenvalues) and major-axis angle in (-pi/2, pi/2]."""
    if not block.is_psd():
        raise ValueError("noise ellipse needs a PSD block")
    w, v = np.linalg.eigh(block.matrix)
    w = np.maximum(w, 0.0)
    major_vec = v[:, 1]
    minor_vec = v[:, 0]
    if math.isclose(w[0], w[1], rel_tol=1e-12, abs_tol=1e-15):
        angle = 0.0
        major_vec = np.array([1.0, 0.0])
        minor_vec = np.array([0.0, 1.0])
    else:
        angle = math.atan2(major_vec[1], major_vec[0])
        if angle <= -math.pi / 2:
            angle += math.pi
        elif angle > math.pi / 2:
            angle -= math.pi
    return Ellipse(math.sqrt(w[1]), math.sqrt(w[0]), angle, major_vec, minor_vec)


def axis_angle(u, v):
    """Angle in degrees between two undirected axes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(1.0, c)))


def cross_correlation_lag(reference, other, T):
    """Lag (fraction of the period) maximizing the circular cross-correlation.

    Both series are sampled uniformly over one period (end point included).
    Positive values mean ``other`` trails ``reference``.
    """
    a = np.asarray(reference, dtype=float)[:-1]
    b = np.asarray(other, dtype=float)[:-1]
    a = a - a.mean()
    b = b - b.mean()
    corr = np.fft.ifft(np.fft.fft(b) * np.conj(np.fft.fft(a))).real
    k = int(np.argmax(corr))
    n = len(a)
    if k > n // 2:
        k -= n
    return k / n
