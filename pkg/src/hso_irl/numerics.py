"""Fixed-step integration and small dense-matrix diagnostics.

Everything here is a pure function of its arguments. SVD work is delegated
to LAPACK through numpy.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError, IntegrationFault, SingularityError

DEFAULT_RANK_TOL = 1e-8


def _check_stage(k, t):
    if not np.all(np.isfinite(k)):
        raise IntegrationFault(t)
    return k


def rk4_step(f: Callable, t: float, y, h: float):
    """Advance ``y' = f(t, y)`` by one classical Runge-Kutta step of size ``h``.

    ``y`` may be a scalar or an array; the return value has the same shape.
    Raises :class:`IntegrationFault` if any stage is non-finite.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    y = np.asarray(y, dtype=float)
    k1 = _check_stage(np.asarray(f(t, y), dtype=float), t)
    k2 = _check_stage(np.asarray(f(t + 0.5 * h, y + 0.5 * h * k1), dtype=float), t + 0.5 * h)
    k3 = _check_stage(np.asarray(f(t + 0.5 * h, y + 0.5 * h * k2), dtype=float), t + 0.5 * h)
    k4 = _check_stage(np.asarray(f(t + h, y + h * k3), dtype=float), t + h)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _as_finite_matrix(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def singular_values(M) -> np.ndarray:
    """All ``min(rows, cols)`` singular values of ``M`` in descending order."""
    M = _as_finite_matrix(M)
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def regularized_condition(M, eps: float) -> float:
    """Condition number of ``M^T M + eps I``.

    Uses the singular values of ``M`` directly, so the Gram matrix is never
    formed. When ``M`` has fewer rows than columns the missing singular
    values are zero.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    M = _as_finite_matrix(M)
    s = singular_values(M)
    s_max = s[0] if s.size else 0.0
    s_min = s[-1] if M.shape[0] >= M.shape[1] and s.size else 0.0
    return gram_condition(s_max**2, s_min**2, eps)


def gram_condition(lam_max: float, lam_min: float, eps: float) -> float:
    """``(lam_max + eps) / (lam_min + eps)`` with Gram eigenvalues clamped at 0."""
    lam_max = max(float(lam_max), 0.0)
    lam_min = max(float(lam_min), 0.0)
    den = lam_min + eps
    if den <= 0.0:
        raise SingularityError("M^T M + eps I is singular (eps = 0 and rank-deficient M)")
    return (lam_max + eps) / den


def range_basis(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of range(M) from left singular vectors above ``rank_tol * s_max``."""
    M = _as_finite_matrix(M)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > rank_tol * s[0]]


def null_basis(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of null(M) (right singular vectors below the rank cutoff)."""
    M = _as_finite_matrix(M)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[rank:].T


def numerical_rank(M, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def range_projection_residual(M, v, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Norm of the component of ``v`` orthogonal to range(M)."""
    if not rank_tol > 0:
        raise ValueError("rank_tol must be positive")
    M = _as_finite_matrix(M)
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != M.shape[0]:
        raise DimensionError(f"vector length {v.shape[0]} does not match {M.shape[0]} rows")
    U = range_basis(M, rank_tol)
    return float(np.linalg.norm(v - U @ (U.T @ v)))
