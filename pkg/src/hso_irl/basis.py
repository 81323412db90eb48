"""Quadratic basis functions and the linear-in-weights form of the optimality conditions.

Weights hold raw upper-triangle matrix entries (row-major pairs ``i <= j``);
the factor two on off-diagonal terms lives in the basis functions, so that
``w^T sigma(x) = x^T unvec(w) x``.

The first entry of the input-cost weights, ``r1`` (the (1,1) element of R),
is fixed to remove the scaling ambiguity and carried separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ExtractionError

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class BasisLayout:
    n: int
    m: int

    @property
    def p_s(self) -> int:
        return self.n * (self.n + 1) // 2

    @property
    def p_q(self) -> int:
        return self.p_s

    @property
    def m_r(self) -> int:
        return self.m * (self.m + 1) // 2

    @property
    def n_weights(self) -> int:
        """Length of the reduced weight vector (``r1`` removed)."""
        return self.p_s + self.p_q + self.m_r - 1

    @property
    def r1_column(self) -> int:
        return self.p_s + self.p_q

    @property
    def slice_s(self) -> slice:
        return slice(0, self.p_s)

    @property
    def slice_q(self) -> slice:
        return slice(self.p_s, self.p_s + self.p_q)

    @property
    def slice_r_minus(self) -> slice:
        return slice(self.p_s + self.p_q, self.n_weights)


def sym_vec(S) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(S).max(initial=0.0)):
        raise ValueError("matrix is not symmetric")
    return S[np.triu_indices(S.shape[0])].copy()


def sym_unvec(w, n: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if n is None:
        n = int(round((np.sqrt(8 * w.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != w.size:
        raise DimensionError(f"{w.size} entries do not form a {n}x{n} upper triangle")
    S = np.zeros((n, n))
    iu = np.triu_indices(n)
    S[iu] = w
    S.T[iu] = w
    return S


def sigma_quad(x) -> np.ndarray:
    """Quadratic monomials: ``x_i^2`` on the diagonal pairs, ``2 x_i x_j`` otherwise."""
    x = np.asarray(x, dtype=float).ravel()
    i, j = np.triu_indices(x.size)
    return np.where(i == j, 1.0, 2.0) * x[i] * x[j]


sigma_S = sigma_quad
sigma_Q = sigma_quad
sigma_R1 = sigma_quad


def grad_sigma_S(x) -> np.ndarray:
    """Jacobian of :func:`sigma_quad`, shape ``(n(n+1)/2, n)``."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    i, j = np.triu_indices(n)
    rows = np.arange(i.size)
    J = np.zeros((i.size, n))
    diag = i == j
    J[rows[diag], i[diag]] = 2.0 * x[i[diag]]
    off = ~diag
    J[rows[off], i[off]] = 2.0 * x[j[off]]
    J[rows[off], j[off]] = 2.0 * x[i[off]]
    return J


def sigma_R2(u) -> np.ndarray:
    """Matrix with ``sigma_R2(u) @ sym_vec(R) == R @ u``, shape ``(m, m(m+1)/2)``."""
    u = np.asarray(u, dtype=float).ravel()
    m = u.size
    i, j = np.triu_indices(m)
    cols = np.arange(i.size)
    out = np.zeros((m, i.size))
    out[i, cols] += u[j]
    off = i != j
    out[j[off], cols[off]] += u[i[off]]
    return out


@dataclass(frozen=True)
class WeightVector:
    w_S: np.ndarray
    w_Q: np.ndarray
    w_R_minus: np.ndarray
    r1: float

    @classmethod
    def from_array(cls, layout: BasisLayout, w, r1: float) -> "WeightVector":
        w = np.asarray(w, dtype=float).ravel()
        if w.size != layout.n_weights:
            raise DimensionError(f"expected {layout.n_weights} weights, got {w.size}")
        return cls(w[layout.slice_s].copy(), w[layout.slice_q].copy(),
                   w[layout.slice_r_minus].copy(), float(r1))

    @classmethod
    def from_costs(cls, S, Q, R, r1: float) -> "WeightVector":
        """Weights of ``(S, Q, R)`` rescaled so that the (1,1) entry of R equals ``r1``."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        c = r1 / R[0, 0]
        w_R = sym_vec(c * R)
        return cls(sym_vec(c * np.atleast_2d(S)), sym_vec(c * np.atleast_2d(Q)), w_R[1:], float(r1))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.w_S, self.w_Q, self.w_R_minus])


@dataclass(frozen=True)
class RegressorBlock:
    sigma_delta: np.ndarray      # (n_weights,)
    sigma_delta_u: np.ndarray    # (m, n_weights)
    sigma_u_block: np.ndarray    # (m + 1,)

    def rows(self) -> np.ndarray:
        return np.vstack([self.sigma_delta[None, :], self.sigma_delta_u])


def full_regressor(x, u, A, B) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the inverse Bellman error and control residual error before ``r1`` is removed."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = x.size, u.size
    if A.shape != (n, n) or B.shape != (n, m):
        raise DimensionError(f"A{A.shape}/B{B.shape} inconsistent with n={n}, m={m}")
    grad = grad_sigma_S(x)
    p = n * (n + 1) // 2
    row_delta = np.concatenate([grad @ (A @ x + B @ u), sigma_quad(x), sigma_quad(u)])
    rows_u = np.hstack([B.T @ grad.T, np.zeros((m, p)), 2.0 * sigma_R2(u)])
    return row_delta, rows_u


def build_regressor_block(x_hat, u, A, B, r1: float) -> RegressorBlock:
    """Regressor rows for one sample with the ``r1`` column moved into the constants."""
    if not r1 > 0:
        raise ValueError("r1 must be positive")
    row_delta, rows_u = full_regressor(x_hat, u, A, B)
    n = np.asarray(x_hat).size
    col = n * (n + 1)  # p_s + p_q
    const = np.concatenate([[row_delta[col]], rows_u[:, col]]) * r1
    return RegressorBlock(
        sigma_delta=np.delete(row_delta, col),
        sigma_delta_u=np.delete(rows_u, col, axis=1),
        sigma_u_block=-const,
    )


@dataclass(frozen=True)
class CostEstimate:
    S: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    K: np.ndarray


def extract_solution(w: WeightVector, B, cond_limit: float = 1e12) -> CostEstimate:
    """Matrices ``(S, Q, R)`` encoded by ``w`` and the implied gain ``K = -R^{-1} B^T S``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = B.shape
    S = sym_unvec(w.w_S, n)
    Q = sym_unvec(w.w_Q, n)
    R = sym_unvec(np.concatenate([[w.r1], w.w_R_minus]), m)
    if not np.all(np.isfinite(R)) or np.linalg.cond(R) > cond_limit:
        raise ExtractionError("estimated R is singular")
    K = -np.linalg.solve(R, B.T @ S)
    return CostEstimate(S=S, Q=Q, R=R, K=K)
