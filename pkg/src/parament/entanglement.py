"""Logarithmic negativity of block-diagonal two-mode Gaussian states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import CovBlock

RADICAND_TOL = 1e-12


class InconsistentBlocks(ValueError):
    """The blocks do not form a valid covariance (negative radicand)."""


@dataclass(frozen=True)
class NegativityReport:
    nu_tilde: float
    log_neg: float

    @property
    def entangled(self):
        return self.log_neg > 0


def _entries(block):
    if isinstance(block, CovBlock):
        return block.s11, block.s12, block.s22
    b = np.asarray(block, dtype=float)
    return b[..., 0], b[..., 1], b[..., 2]


def symplectic_nu(plus, minus):
    """Smallest partially transposed symplectic eigenvalue.

    Accepts CovBlocks or arrays of stored blocks ``(..., 3)`` which are
    evaluated elementwise.
    """
    a1, b1, c1 = _entries(plus)
    a2, b2, c2 = _entries(minus)
    sigma = a1 * c2 + c1 * a2 - 2 * b1 * b2
    d1 = a1 * c1 - b1 * b1
    d2 = a2 * c2 - b2 * b2
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise InconsistentBlocks("blocks must have positive determinant")
    if np.any(a1 <= 0) or np.any(a2 <= 0):
        raise InconsistentBlocks("blocks must be positive definite")
    rad = sigma * sigma - 4 * d1 * d2
    scale = np.maximum(sigma * sigma, 1.0)
    if np.any(rad < -RADICAND_TOL * scale):
        raise InconsistentBlocks(f"negative radicand {np.min(rad):.3e} in symplectic eigenvalue")
    rad = np.maximum(rad, 0.0)
    # sigma - sqrt(rad) == 4 d1 d2 / (sigma + sqrt(rad)) avoids cancellation
    nu2 = 2 * d1 * d2 / (sigma + np.sqrt(rad))
    nu = np.sqrt(nu2)
    return float(nu) if np.ndim(nu) == 0 else nu


def log_negativity(plus, minus) -> NegativityReport:
    nu = symplectic_nu(plus, minus)
    return NegativityReport(nu, -math.log(2 * nu))


def log_negativity_series(plus, minus):
    """E_N = -ln(2 nu) for arrays of stored blocks, shape (n, 3)."""
    return -np.log(2 * symplectic_nu(plus, minus))


def period_average(values, t, T, min_samples=64):
    """Trapezoidal mean of ``values`` sampled uniformly over exactly one period."""
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(t)}")
    if abs((t[-1] - t[0]) - T) > 1e-9 * T:
        raise ValueError("samples do not span exactly one period")
    dt = np.diff(t)
    if np.abs(dt - dt.mean()).max() > 1e-9 * T:
        raise ValueError("samples are not uniform")
    return float(np.trapezoid(values, t) / T)
