"""Adaptive Dormand-Prince 5(4) integrator for small dense ODE systems.

The state is a flat float array.  Steps are clipped so that every requested
output time is hit exactly, which keeps the period sampling uniform without
dense-output interpolation.
"""

from __future__ import annotations

import numpy as np


class IntegrationError(RuntimeError):
    """Step-size underflow or a failed state check during integration."""

    def __init__(self, message, t=None, h=None):
        super().__init__(message)
        self.t = t
        self.h = h


# Dormand & Prince (1980), RK5(4)7M
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A = [np.array(row) for row in _A]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def integrate(
    f,
    y0,
    t_eval,
    rtol=1e-9,
    atol=1e-12,
    max_step=np.inf,
    first_step=None,
    check=None,
    min_step=1e-14,
):
    """Integrate ``y' = f(t, y)`` and return the states at ``t_eval``.

    ``t_eval`` must be monotone; its first entry is the initial time.  Time
    may run backwards.  ``check(t, y)`` is called after every accepted step
    and may raise to abort.  Returns an array of shape ``(len(t_eval),
    len(y0))`` and the number of accepted steps.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    y = np.array(y0, dtype=float)
    out = np.empty((len(t_eval), y.size))
    out[0] = y
    if len(t_eval) == 1:
        return out, 0
    direction = 1.0 if t_eval[-1] >= t_eval[0] else -1.0
    span = abs(t_eval[-1] - t_eval[0])
    h = abs(first_step) if first_step else min(max_step, span / 100 or 1.0)
    h = min(h, max_step)
    t = t_eval[0]
    k = np.empty((7, y.size))
    k[0] = f(t, y)
    n_steps = 0
    for i in range(1, len(t_eval)):
        target = t_eval[i]
        while direction * (target - t) > 0:
            remaining = abs(target - t)
            last = h >= remaining * (1 - 1e-12)
            step = remaining if last else h
            hs = direction * step
            for s in range(1, 7):
                yi = y + hs * (_A[s] @ k[:s])
                k[s] = f(t + _C[s] * hs, yi)
            y_new = y + hs * (_B[:6] @ k[:6])
            err = hs * (_E @ k)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = np.sqrt(np.mean((err / scale) ** 2))
            if err_norm <= 1.0:
                t = target if last else t + hs
                y = y_new
                k[0] = k[6]
                n_steps += 1
                if check is not None:
                    check(t, y)
                factor = _MAX_FACTOR if err_norm == 0 else min(
                    _MAX_FACTOR, _SAFETY * err_norm**-0.2
                )
                if not last or factor < 1:
                    h = min(max_step, step * factor)
            else:
                h = step * max(_MIN_FACTOR, _SAFETY * err_norm**-0.2)
            if h < min_step * max(1.0, abs(t)):
                raise IntegrationError(
                    f"step size underflow (h={h:.3e}) at t={t:.6g}", t=t, h=h
                )
        out[i] = y
    return out, n_steps
