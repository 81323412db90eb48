"""Regularized history stack observer.

The observer jointly estimates the state and the cost weights:

    x_hat' = A x_hat + B u + K3 (y - C x_hat)
    w'     = k4 (Sigma^T Sigma + eps I)^{-1} Sigma^T (sigma_u - Sigma w)

where ``Sigma`` and ``sigma_u`` are assembled from the active history stack
and held constant between stack swaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisLayout, WeightVector, extract_solution
from .control import care_residual
from .errors import DimensionError, ExtractionError, SingularityError
from .numerics import rk4_step
from .stack import HistoryStack


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            raise DimensionError(f"inconsistent shapes A{self.A.shape} B{self.B.shape} C{self.C.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def layout(self) -> BasisLayout:
        return BasisLayout(self.n, self.m)


@dataclass(frozen=True)
class GainConfig:
    K3: np.ndarray
    k4: float
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "K3", np.atleast_2d(np.asarray(self.K3, dtype=float)))
        if not self.k4 > 0:
            raise ValueError("k4 must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")


@dataclass
class ObserverState:
    x_hat: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def weights(self, r1: float, layout: BasisLayout) -> WeightVector:
        return WeightVector.from_array(layout, self.w, r1)


def delta(sigma_hat, sigma_u, w) -> np.ndarray:
    """Stacked residual ``sigma_u - sigma_hat @ w``."""
    sigma_hat = np.atleast_2d(np.asarray(sigma_hat, dtype=float))
    sigma_u = np.asarray(sigma_u, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if sigma_hat.shape != (sigma_u.size, w.size):
        raise DimensionError(f"Sigma {sigma_hat.shape} vs sigma_u {sigma_u.size} and w {w.size}")
    return sigma_u - sigma_hat @ w


def _regularized_gram_factor(sigma_hat, eps):
    G = sigma_hat.T @ sigma_hat + eps * np.eye(sigma_hat.shape[1])
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = None
    # a zero or tiny pivot means the Gram matrix is numerically singular
    d = np.abs(np.diag(L)) if L is not None else np.zeros(1)
    if L is None or d.min() <= 1e-7 * d.max():
        raise SingularityError("Sigma^T Sigma + eps I is not invertible")
    return L


@dataclass
class WeightUpdate:
    """Affine weight dynamics ``w' = g - H w`` built once per active stack.

    ``H = k4 (Sigma^T Sigma + eps I)^{-1} Sigma^T Sigma`` and
    ``g = k4 (Sigma^T Sigma + eps I)^{-1} Sigma^T sigma_u``. An empty stack
    gives ``w' = 0``.
    """

    sigma_hat: np.ndarray
    sigma_u: np.ndarray
    k4: float
    eps: float
    H: np.ndarray = field(init=False, repr=False)
    g: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = self.sigma_hat.shape[1]
        if self.sigma_hat.shape[0] == 0 or not np.any(self.sigma_hat):
            self.H = np.zeros((p, p))
            self.g = np.zeros(p)
            return
        L = _regularized_gram_factor(self.sigma_hat, self.eps)
        gain = np.linalg.solve(L.T, np.linalg.solve(L, self.sigma_hat.T))
        gain *= self.k4
        self.H = gain @ self.sigma_hat
        self.g = gain @ self.sigma_u

    @classmethod
    def from_stack(cls, stack: HistoryStack, k4: float, eps: float | None = None) -> "WeightUpdate":
        return cls(stack.sigma_hat, stack.sigma_u, k4, stack.eps if eps is None else eps)

    @classmethod
    def idle(cls, p: int) -> "WeightUpdate":
        return cls(np.zeros((0, p)), np.zeros(0), 1.0, 1.0)

    def rate(self, w):
        return self.g - self.H @ w

    def delta(self, w) -> np.ndarray:
        return delta(self.sigma_hat, self.sigma_u, w)


def observer_rhs(x_hat, w, y, u, sys: LtiSystem, K3, update: WeightUpdate):
    dx = sys.A @ x_hat + sys.B @ u + K3 @ (y - sys.C @ x_hat)
    return dx, update.rate(w)


def observer_step(state: ObserverState, y, u, stack: HistoryStack | WeightUpdate,
                  sys: LtiSystem, gains: GainConfig, h: float) -> ObserverState:
    """One RK4 step of the observer with ``y`` and ``u`` held over the step."""
    update = stack if isinstance(stack, WeightUpdate) else WeightUpdate.from_stack(stack, gains.k4, gains.eps)
    y = np.asarray(y, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    n = sys.n

    def f(_t, z):
        dx, dw = observer_rhs(z[:n], z[n:], y, u, sys, gains.K3, update)
        return np.concatenate([dx, dw])

    z = rk4_step(f, state.t, np.concatenate([state.x_hat, state.w]), h)
    return ObserverState(x_hat=z[:n], w=z[n:], t=state.t + h)


def vdot_check(sigma_hat, Delta, k4: float, eps: float) -> float:
    """Orbital derivative of ``V = |Delta|^2 / 2`` along the residual dynamics.

    Evaluated as ``-k4 |L^{-1} Sigma^T Delta|^2`` with ``L L^T`` the Cholesky
    factorisation of ``Sigma^T Sigma + eps I``.
    """
    sigma_hat = np.atleast_2d(np.asarray(sigma_hat, dtype=float))
    Delta = np.asarray(Delta, dtype=float).ravel()
    z = sigma_hat.T @ Delta
    if not np.any(z):
        return 0.0
    L = _regularized_gram_factor(sigma_hat, eps)
    v = np.linalg.solve(L, z)
    return -k4 * float(v @ v)


@dataclass(frozen=True)
class EquivalenceReport:
    pointwise_hjb_residuals: np.ndarray
    gain_error: float
    full_hjb_residual: float
    equivalence_tol: float
    hjb_tol: float
    equivalent: bool
    note: str = ""


def certify_equivalence(w: WeightVector, data, sys: LtiSystem, K_expert, varpi: float,
                        hjb_tol: float = 1e-2) -> EquivalenceReport:
    """Check that the weights define an equivalent solution on ``data``.

    ``data`` is a history stack or an ``(n, N)`` array of states. The
    solution is declared equivalent when every pointwise HJB residual is at
    most ``hjb_tol * (1 + |x_i|^2)`` and the implied gain is within
    ``varpi`` of the expert's in Frobenius norm. A singular estimated R
    yields a non-equivalent report instead of an exception.
    """
    X = data.states() if isinstance(data, HistoryStack) else np.atleast_2d(np.asarray(data, dtype=float))
    K_expert = np.atleast_2d(np.asarray(K_expert, dtype=float))
    try:
        est = extract_solution(w, sys.B)
    except ExtractionError as exc:
        return EquivalenceReport(np.full(X.shape[1], np.nan), np.inf, np.inf, varpi, hjb_tol, False, str(exc))
    M = care_residual(sys.A, sys.B, est.Q, est.R, est.S)
    pointwise = np.einsum("in,ij,jn->n", X, M, X)
    gain_error = float(np.linalg.norm(est.K - K_expert))
    bound = hjb_tol * (1.0 + np.sum(X * X, axis=0))
    ok = bool(np.all(np.abs(pointwise) <= bound) and gain_error <= varpi)
    return EquivalenceReport(pointwise, gain_error, float(np.linalg.norm(M)), varpi, hjb_tol, ok)
