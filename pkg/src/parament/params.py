"""System parameters, normal-mode blocks and the per-mode system matrices.

All rates are angular (rad/s) and the control effort ``q_effort`` is a time
(s).  Quadratures are dimensionless with vacuum variance 1/2.  The numerical
drivers work on :meth:`SystemParams.normalized` copies where ``omega0 == 1``
and time is measured in units of ``1/omega0``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

PSD_TOL = 1e-10

RATE_CONVENTIONS = ("angular", "bare")


class ParameterError(ValueError):
    """Raised when a parameter set violates a physical invariant."""


@dataclass(frozen=True)
class SystemParams:
    omega0: float
    g0: float
    g1: float
    omega_c: float
    gamma: float
    gamma_th: float
    gamma_ba: float
    eta: float
    q_effort: float
    theta_epr: float = math.pi
    rate_convention: str = "angular"

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ParameterError(f"omega0 must be positive, got {self.omega0}")
        if not 0 < self.eta <= 1:
            raise ParameterError(f"eta must lie in (0, 1], got {self.eta}")
        if self.g1 < 0:
            raise ParameterError(f"g1 must be non-negative, got {self.g1}")
        if self.gamma_th < 0 or self.gamma_ba < 0:
            raise ParameterError("decoherence rates must be non-negative")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be non-negative, got {self.gamma}")
        if not self.q_effort > 0:
            raise ParameterError(f"q_effort must be positive, got {self.q_effort}")
        if not self.omega_c > 0:
            raise ParameterError(f"omega_c must be positive, got {self.omega_c}")
        if not self.omega0 + 4 * self.g0 > 0:
            raise ParameterError(
                "differential mode unstable: omega0 + 4*g0 = "
                f"{self.omega0 + 4 * self.g0} <= 0"
            )
        if self.rate_convention not in RATE_CONVENTIONS:
            raise ParameterError(f"unknown rate_convention {self.rate_convention!r}")

    @classmethod
    def from_lab(
        cls,
        omega0_hz,
        gamma_ba_hz,
        gamma_th_hz,
        gamma_hz,
        q_effort,
        g0_rel,
        g1_rel,
        eta,
        omega_c_rel=2.0,
        theta_epr=math.pi,
        rate_convention="angular",
    ):
        """Build parameters from quoted laboratory numbers.

        ``omega0_hz`` is always Omega0/2pi.  Under the ``"angular"`` convention
        every quoted rate is multiplied by 2pi, so rate ratios equal the ratio
        of the quoted numbers; ``"bare"`` takes the damping/decoherence rates
        as s^-1.  ``g0_rel`` and ``g1_rel`` are in units of Omega0 and
        ``omega_c_rel`` in units of the differential frequency.
        """
        if rate_convention not in RATE_CONVENTIONS:
            raise ParameterError(f"unknown rate_convention {rate_convention!r}")
        omega0 = 2 * math.pi * omega0_hz
        scale = 2 * math.pi if rate_convention == "angular" else 1.0
        g0 = g0_rel * omega0
        if not omega0 + 4 * g0 > 0:
            raise ParameterError("differential mode unstable: omega0 + 4*g0 <= 0")
        omega_minus = math.sqrt(omega0**2 + 4 * omega0 * g0)
        return cls(
            omega0=omega0,
            g0=g0,
            g1=g1_rel * omega0,
            omega_c=omega_c_rel * omega_minus,
            gamma=scale * gamma_hz,
            gamma_th=scale * gamma_th_hz,
            gamma_ba=scale * gamma_ba_hz,
            eta=eta,
            q_effort=q_effort,
            theta_epr=theta_epr,
            rate_convention=rate_convention,
        )

    @property
    def gamma_m(self):
        """Measurement rate eta * Gamma_ba."""
        return self.eta * self.gamma_ba

    @property
    def gamma_tot(self):
        return self.gamma_th + self.gamma_ba

    @property
    def omega_minus(self):
        return eigenfrequencies(self)[1]

    @property
    def period(self):
        """Drive period 2pi / omega_c."""
        return 2 * math.pi / self.omega_c

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def normalized(self) -> "NormalizedParams":
        if isinstance(self, NormalizedParams):
            return self
        w = self.omega0
        return NormalizedParams(
            omega0=1.0,
            g0=self.g0 / w,
            g1=self.g1 / w,
            omega_c=self.omega_c / w,
            gamma=self.gamma / w,
            gamma_th=self.gamma_th / w,
            gamma_ba=self.gamma_ba / w,
            eta=self.eta,
            q_effort=self.q_effort * w,
            theta_epr=self.theta_epr,
            rate_convention=self.rate_convention,
            omega0_si=w,
        )

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class NormalizedParams(SystemParams):
    """SystemParams with rates in units of Omega0 and time in units of 1/Omega0.

    ``omega0_si`` keeps the physical trap frequency so that the
    transformation can be undone.
    """

    omega0_si: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.omega0 != 1.0:
            raise ParameterError("normalized parameters require omega0 == 1")

    def denormalize(self) -> SystemParams:
        w = self.omega0_si
        return SystemParams(
            omega0=w,
            g0=self.g0 * w,
            g1=self.g1 * w,
            omega_c=self.omega_c * w,
            gamma=self.gamma * w,
            gamma_th=self.gamma_th * w,
            gamma_ba=self.gamma_ba * w,
            eta=self.eta,
            q_effort=self.q_effort / w,
            theta_epr=self.theta_epr,
            rate_convention=self.rate_convention,
        )

    def to_dict(self):
        d = super().to_dict()
        d.pop("omega0_si")
        return d


def dimensionless(
    g0=0.2,
    g1=0.05,
    eta=0.5,
    gamma_ba=1300 / 29400,
    gamma_th=66.2 / 29400,
    gamma=0.31e-6 / 29400,
    q_effort=1.08e-6 * 2 * math.pi * 29.4e3,
    omega_c=None,
    theta_epr=math.pi,
):
    """Normalized parameters (omega0 = 1).  Defaults are the reference resonant attractive set."""
    if omega_c is None:
        if not 1 + 4 * g0 > 0:
            raise ParameterError("differential mode unstable: omega0 + 4*g0 <= 0")
        omega_c = 2 * math.sqrt(1 + 4 * g0)
    return NormalizedParams(
        omega0=1.0,
        g0=g0,
        g1=g1,
        omega_c=omega_c,
        gamma=gamma,
        gamma_th=gamma_th,
        gamma_ba=gamma_ba,
        eta=eta,
        q_effort=q_effort,
        theta_epr=theta_epr,
        omega0_si=2 * math.pi * 29.4e3,
    )


# -- covariance containers ---------------------------------------------------


@dataclass(frozen=True)
class CovBlock:
    """Symmetric 2x2 covariance block stored as its three free entries."""

    s11: float
    s12: float
    s22: float

    @classmethod
    def from_matrix(cls, m, atol=1e-12):
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2):
            raise ValueError(f"expected 2x2 matrix, got shape {m.shape}")
        if abs(m[0, 1] - m[1, 0]) > atol * max(1.0, np.abs(m).max()):
            raise ValueError("matrix is not symmetric")
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def identity(cls, scale=1.0):
        return cls(scale, 0.0, scale)

    @property
    def matrix(self):
        return np.array([[self.s11, self.s12], [self.s12, self.s22]])

    def as_array(self):
        return np.array([self.s11, self.s12, self.s22])

    @property
    def det(self):
        return self.s11 * self.s22 - self.s12**2

    @property
    def trace(self):
        return self.s11 + self.s22

    def eigvals(self):
        """Eigenvalues in ascending order."""
        return np.linalg.eigvalsh(self.matrix)

    def is_psd(self, tol=PSD_TOL):
        return self.s11 >= -tol and self.s22 >= -tol and self.det >= -tol

    def __add__(self, other):
        return CovBlock(self.s11 + other.s11, self.s12 + other.s12, self.s22 + other.s22)


@dataclass(frozen=True)
class TwoModeState:
    """Block-diagonal normal-mode covariance: common (+) and differential (-)."""

    plus: CovBlock
    minus: CovBlock

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).reshape(2, 3)
        return cls(CovBlock.from_array(a[0]), CovBlock.from_array(a[1]))

    def as_array(self):
        return np.stack([self.plus.as_array(), self.minus.as_array()])

    @property
    def matrix(self):
        """Full 4x4 matrix in the (x+, p+, x-, p-) ordering."""
        out = np.zeros((4, 4))
        out[:2, :2] = self.plus.matrix
        out[2:, 2:] = self.minus.matrix
        return out

    def is_psd(self, tol=PSD_TOL):
        return self.plus.is_psd(tol) and self.minus.is_psd(tol)

    def __add__(self, other):
        return TwoModeState(self.plus + other.plus, self.minus + other.minus)


def blocks_psd(blocks, tol=PSD_TOL):
    """Vectorized PSD test on an array of stored blocks (..., 3)."""
    b = np.asarray(blocks)
    det = b[..., 0] * b[..., 2] - b[..., 1] ** 2
    return (b[..., 0] >= -tol) & (b[..., 2] >= -tol) & (det >= -tol)


# -- operations ----------------------------------------------------------------


def modulated_coupling(p: SystemParams, t):
    """g(t) = g0 + 2 g1 cos(omega_c t); works elementwise on arrays."""
    return p.g0 + 2 * p.g1 * np.cos(p.omega_c * np.asarray(t))


def eigenfrequencies(p: SystemParams):
    arg = p.omega0**2 + 4 * p.omega0 * p.g0
    if not arg > 0:
        raise ParameterError("differential frequency is imaginary (omega0 + 4 g0 <= 0)")
    return p.omega0, math.sqrt(arg)


_MODE_MAP = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
    ]
) / math.sqrt(2.0)


def mode_transform(x):
    """Map (X1, P1, X2, P2) to (x+, p+, x-, p-).

    A 4-vector is mapped linearly; a 4x4 covariance congruently.  The map is
    orthogonal and its own inverse, so the same call converts back.
    """
    x = np.asarray(x, dtype=float)
    if x.shape == (4,):
        return _MODE_MAP @ x
    if x.shape == (4, 4):
        if not np.allclose(x, x.T, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max())):
            raise ValueError("covariance input must be symmetric")
        out = _MODE_MAP @ x @ _MODE_MAP.T
        return 0.5 * (out + out.T)
    raise ValueError(f"expected a 4-vector or a 4x4 matrix, got shape {x.shape}")


def drift_matrix(p: SystemParams, t):
    """Per-mode drift blocks (A+, A-(t))."""
    a_plus = np.array([[0.0, p.omega0], [-p.omega0, -p.gamma]])
    a_minus = np.array(
        [[0.0, p.omega0], [-p.omega0 - 4 * float(modulated_coupling(p, t)), -p.gamma]]
    )
    return a_plus, a_minus


def static_drift_matrix(p: SystemParams):
    """Drift blocks with g frozen at g0."""
    return (
        np.array([[0.0, p.omega0], [-p.omega0, -p.gamma]]),
        np.array([[0.0, p.omega0], [-p.omega0 - 4 * p.g0, -p.gamma]]),
    )


@dataclass(frozen=True)
class NoiseMatrices:
    V: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    W: float = 0.5

    @property
    def info(self):
        """C^T W^-1 C, the Riccati quadratic-term weight."""
        return np.outer(self.C, self.C) / self.W


def noise_matrices(p: SystemParams) -> NoiseMatrices:
    """Per-mode diffusion V = diag(0, Gamma_th + Gamma_ba), measurement row and W."""
    return NoiseMatrices(
        V=np.diag([0.0, p.gamma_tot]),
        C=math.sqrt(p.gamma_m) * np.array([1.0, 0.0]),
        W=0.5,
    )
