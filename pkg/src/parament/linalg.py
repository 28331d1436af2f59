"""Small dense matrix-equation solvers used by the per-mode 2x2 blocks."""

from __future__ import annotations

import numpy as np


class RiccatiError(np.linalg.LinAlgError):
    """No stabilizing solution of an algebraic Riccati equation."""


def lyap(L, Q):
    """Solve ``L X + X L^T + Q = 0`` for symmetric X (any size, via Kronecker)."""
    L = np.asarray(L, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = L.shape[0]
    eye = np.eye(n)
    K = np.kron(eye, L) + np.kron(L, eye)
    x = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def care(A, G, Q, refine=2):
    """Stabilizing solution of ``A^T X + X A - X G X + Q = 0``.

    Uses the stable invariant subspace of the Hamiltonian matrix
    ``[[A, -G], [-Q, -A^T]]``, followed by ``refine`` Newton-Kleinman
    corrections.  The closed loop ``A - G X`` is Hurwitz for the returned X.
    """
    A = np.asarray(A, dtype=float)
    G = np.asarray(G, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    H = np.block([[A, -G], [-Q, -A.T]])
    w, U = np.linalg.eig(H)
    stable = np.argsort(w.real)[:n]
    if np.any(w[stable].real >= -1e-12 * max(1.0, np.abs(w).max())):
        raise RiccatiError("Hamiltonian matrix has eigenvalues on the imaginary axis")
    U1 = U[:n, stable]
    U2 = U[n:, stable]
    if np.linalg.cond(U1) > 1e12:
        raise RiccatiError("stable subspace is not a graph (no stabilizing solution)")
    X = np.real(np.linalg.solve(U1.T, U2.T).T)
    X = 0.5 * (X + X.T)
    for _ in range(refine):
        Acl = A - G @ X
        res = A.T @ X + X @ A - X @ G @ X + Q
        X = X + lyap(Acl.T, res)
        X = 0.5 * (X + X.T)
    if np.max(np.linalg.eigvals(A - G @ X).real) >= 0:
        raise RiccatiError("solution is not stabilizing")
    return X


def care_residual(A, G, Q, X):
    return A.T @ X + X @ A - X @ G @ X + Q


def expm2(L, tau):
    """exp(L * tau) for a real 2x2 matrix L and an array of times.

    Closed form through the eigenvalues ``s +- d`` of L; the ``d -> 0`` limit
    is handled by the series of sinh(d tau)/d.  Returns shape (..., 2, 2).
    """
    L = np.asarray(L, dtype=float)
    tau = np.asarray(tau, dtype=float)
    s = 0.5 * (L[0, 0] + L[1, 1])
    det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    d = np.sqrt(complex(s * s - det))
    x = d * tau
    small = np.abs(x) < 1e-6
    safe_x = np.where(small, 1.0, x)
    ch = np.cosh(x)
    shd = np.where(small, tau * (1 + x * x / 6), np.sinh(safe_x) / np.where(small, 1.0, d))
    e = np.exp(s * tau)
    N = L - s * np.eye(2)
    out = e[..., None, None] * (
        ch.real[..., None, None] * np.eye(2) + shd.real[..., None, None] * N
    )
    return out
