"""Dense linear algebra helpers shared by the rest of the package.

Everything here works on small dense matrices (n <= 30 or so). The heavy
lifting is delegated to LAPACK through numpy; this module adds the checks,
tolerances and error reporting the higher layers rely on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-9
    eig_residual: float = 1e-8
    lyapunov_residual: float = 1e-7
    psd_floor: float = -1e-9
    sqrt_residual: float = 1e-8
    hurwitz: float = 1e-9
    lmi: float = 1e-6
    lmi_printed: float = 0.05
    rank: float = 1e-12


TOL = Tolerances()


class NumericsError(ValueError):
    """Raised for dimension problems and ill-posed solves."""


class NotPSDError(NumericsError):
    pass


class SingularOperatorError(NumericsError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


def as_matrix(a, name="matrix"):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"{name} has non-finite entries")
    return m


def _square(a, name):
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise NumericsError(f"{name} must be square, got {m.shape}")
    return m


def symmetrize(S):
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def sym_eig(S):
    """Eigen-decomposition of a symmetric matrix.

    Returns ascending eigenvalues and an orthonormal eigenvector matrix whose
    columns match the eigenvalues. Only the symmetric part of S is used.
    """
    S = _square(S, "S")
    w, V = np.linalg.eigh(symmetrize(S))
    return w, V


def spectral_norm(X):
    """Largest singular value, computed from the Gram matrix eigenvalues."""
    X = as_matrix(X, "X")
    if X.size == 0:
        return 0.0
    G = X.T @ X if X.shape[0] >= X.shape[1] else X @ X.T
    w, _ = sym_eig(G)
    return float(np.sqrt(max(w[-1], 0.0)))


def solve_lyapunov(A, Q):
    """Solve A^T X + X A + Q = 0 by Kronecker vectorization.

    Raises SingularOperatorError when the Lyapunov operator is singular
    (A has two eigenvalues summing to zero) or the solve is inaccurate.
    """
    A = _square(A, "A")
    Q = _square(Q, "Q")
    n = A.shape[0]
    if Q.shape[0] != n:
        raise NumericsError(f"Q must be {n}x{n}, got {Q.shape}")
    I = np.eye(n)
    # row-major vec: vec(A^T X) = (A^T kron I) vec X, vec(X A) = (I kron A^T) vec X
    L = np.kron(A.T, I) + np.kron(I, A.T)
    ev = np.linalg.eigvals(A)
    gap = np.min(np.abs(ev[:, None] + ev[None, :])) if n else 1.0
    if gap < 1e-12 * max(1.0, np.abs(A).max()):
        raise SingularOperatorError("Lyapunov operator is singular", residual=np.inf)
    try:
        x = np.linalg.solve(L, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError(f"Lyapunov solve failed: {exc}", residual=np.inf)
    X = symmetrize(x.reshape(n, n)) if np.allclose(Q, Q.T) else x.reshape(n, n)
    res = np.linalg.norm(A.T @ X + X @ A + Q)
    bound = TOL.lyapunov_residual * (np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(Q))
    if res > max(bound, 1e-300):
        raise SingularOperatorError(f"Lyapunov residual {res:.3e} exceeds {bound:.3e}", residual=res)
    return X


def solve_sylvester(A, B, C):
    """Solve A X + X B = C (Kronecker vectorization)."""
    A = _square(A, "A")
    B = _square(B, "B")
    C = as_matrix(C, "C")
    n, m = A.shape[0], B.shape[0]
    if C.shape != (n, m):
        raise NumericsError(f"C must be {n}x{m}, got {C.shape}")
    L = np.kron(A, np.eye(m)) + np.kron(np.eye(n), B.T)
    try:
        x = np.linalg.solve(L, C.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError(f"Sylvester solve failed: {exc}", residual=np.inf)
    return x.reshape(n, m)


def psd_sqrt(M):
    """Symmetric PSD square root. Tiny negative eigenvalues are clamped."""
    w, V = sym_eig(M)
    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    if w.size and w[0] < TOL.psd_floor * scale:
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    r = np.sqrt(np.clip(w, 0.0, None))
    R = (V * r) @ V.T
    return symmetrize(R)


def spectral_abscissa(A):
    A = _square(A, "A")
    return float(np.max(np.linalg.eigvals(A).real)) if A.size else -np.inf


def is_hurwitz(A):
    """Return (hurwitz, abscissa) using the eigenvalue real parts."""
    a = spectral_abscissa(A)
    return a < -TOL.hurwitz, a


def lyapunov_certifies_hurwitz(A):
    """Independent Hurwitz test: A^T X + X A = -I has a positive definite solution."""
    try:
        X = solve_lyapunov(A, np.eye(np.asarray(A).shape[0]))
    except SingularOperatorError:
        return False
    return bool(sym_eig(X)[0][0] > 0)


@dataclass(frozen=True)
class LstsqResult:
    X: np.ndarray
    residual: float
    rank_deficient: bool


def least_squares(A, B):
    """Minimize ||A X - B||_F. Rank-deficient A gives the minimum-norm solution."""
    A = as_matrix(A, "A")
    B = np.asarray(B, dtype=float)
    vec = B.ndim == 1
    B2 = B.reshape(-1, 1) if vec else as_matrix(B, "B")
    if A.shape[0] != B2.shape[0]:
        raise NumericsError(f"row mismatch: A has {A.shape[0]}, B has {B2.shape[0]}")
    X, _, rank, _ = np.linalg.lstsq(A, B2, rcond=None)
    res = float(np.linalg.norm(A @ X - B2))
    if vec:
        X = X.ravel()
    return LstsqResult(X, res, bool(rank < min(A.shape)))
