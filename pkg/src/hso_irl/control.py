"""Expert synthesis (CARE / LQR) and Luenberger observer gains."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationFault, SingularityError, SynthesisFailure, UnsupportedConfiguration
from .numerics import rk4_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CareSolution:
    S: np.ndarray
    residual_norm: float
    time_to_converge: float
    steps: int
    step_size: float


@dataclass(frozen=True)
class ExpertPolicy:
    """Optimal feedback ``u = K x`` with ``K = -R^{-1} B^T S``."""

    K: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    care: CareSolution


def _as2d(M):
    return np.atleast_2d(np.asarray(M, dtype=float))


def care_residual(A, B, Q, R, S) -> np.ndarray:
    """``A^T S + S A - S B R^{-1} B^T S + Q``."""
    A, B, Q, R, S = map(_as2d, (A, B, Q, R, S))
    G = B @ np.linalg.solve(R, B.T)
    return A.T @ S + S @ A - S @ G @ S + Q


def spectral_radius_estimate(M, squarings: int = 6) -> float:
    """Gelfand estimate ``||M^k||^(1/k)`` with ``k = 2**squarings`` (an upper bound)."""
    M = _as2d(M)
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return 0.0
    P = M / scale
    log_norm = 0.0
    for _ in range(squarings):
        P = P @ P
        s = np.linalg.norm(P)
        if s == 0.0:
            return 0.0
        P /= s
        log_norm = 2.0 * log_norm + np.log(s)
    return float(scale * np.exp(log_norm / 2**squarings))


def _default_care_step(A, G, Q):
    # The Hamiltonian's eigenvalues are the closed-loop poles and their
    # mirror images; the Riccati flow linearises to sums of two closed-loop
    # poles near its fixed point.
    H = np.block([[A, -G], [-Q, -A.T]])
    return 1.0 / max(1.0, 2.0 * spectral_radius_estimate(H))


def solve_care(A, B, Q, R, tol: float | None = None, t_max: float = 2000.0,
               h: float | None = None) -> CareSolution:
    """Solve the continuous algebraic Riccati equation by integrating

        dP/dt = A^T P + P A - P B R^{-1} B^T P + Q,   P(0) = 0

    with fixed-step RK4 until ``||dP/dt||_F <= tol``.

    The default tolerance is ``1e-12 * max(1, ||Q||_F)``. If no step is
    given it is set from a spectral-radius estimate of the Hamiltonian
    matrix; should the integration blow up with it, the step is halved and
    the integration restarted (at most four times).
    """
    A, B, Q, R = map(_as2d, (A, B, Q, R))
    n = A.shape[0]
    if np.linalg.cond(R) > 1e14:
        raise SingularityError("R is not invertible")
    G = B @ np.linalg.solve(R, B.T)
    G = 0.5 * (G + G.T)
    if tol is None:
        tol = 1e-12 * max(1.0, np.linalg.norm(Q))

    def flow(_t, P):
        return A.T @ P + P @ A - P @ G @ P + Q

    step = h if h is not None else _default_care_step(A, G, Q)
    retries = 0 if h is not None else 4
    last = np.inf
    while True:
        P = np.zeros((n, n))
        t = 0.0
        k = 0
        try:
            while t < t_max:
                dP = flow(t, P)
                last = float(np.linalg.norm(dP))
                if last <= tol:
                    break
                P = rk4_step(flow, t, P, step)
                P = 0.5 * (P + P.T)
                t += step
                k += 1
                if not np.all(np.isfinite(P)) or np.abs(P).max() > 1e150:
                    raise IntegrationFault(t)
            else:
                raise SynthesisFailure(f"Riccati flow not converged by t_max={t_max}", last)
        except IntegrationFault as fault:
            if retries == 0:
                raise SynthesisFailure(f"Riccati flow diverged at t={fault.t:.6g}", last) from fault
            retries -= 1
            step *= 0.5
            logger.debug("Riccati integration diverged, retrying with h=%g", step)
            continue
        res = float(np.linalg.norm(care_residual(A, B, Q, R, P)))
        return CareSolution(S=P, residual_norm=res, time_to_converge=t, steps=k, step_size=step)


def closed_loop_decay(A, B, K, horizon: float, h: float | None = None, seed: int = 0) -> float:
    """Ratio ``||x(0)|| / ||x(horizon)||`` for ``x' = (A + B K) x`` from a random start."""
    A, B, K = map(_as2d, (A, B, K))
    Acl = A + B @ K
    if h is None:
        h = 0.5 / max(1.0, spectral_radius_estimate(Acl))
    x0 = np.random.default_rng(seed).standard_normal(A.shape[0])
    x = x0.copy()
    steps = int(np.ceil(horizon / h))
    for i in range(steps):
        x = rk4_step(lambda _t, z: Acl @ z, i * h, x, h)
    xn = np.linalg.norm(x)
    return np.inf if xn == 0.0 else float(np.linalg.norm(x0) / xn)


def lqr_gain(A, B, Q, R, check_horizon: float | None = 20.0, **care_kwargs) -> ExpertPolicy:
    """Infinite-horizon LQR gain for ``x' = A x + B u``, sign convention ``u = K x``.

    If ``check_horizon`` is set, the closed loop is simulated from a random
    start and must shrink ``||x||`` by at least 10x over that horizon.
    """
    A, B, Q, R = map(_as2d, (A, B, Q, R))
    care = solve_care(A, B, Q, R, **care_kwargs)
    K = -np.linalg.solve(R, B.T @ care.S)
    if check_horizon is not None and np.any(K):
        ratio = closed_loop_decay(A, B, K, check_horizon)
        if ratio < 10.0:
            raise SynthesisFailure(
                f"closed loop decayed only by {ratio:.3g}x over {check_horizon}s", care.residual_norm)
    return ExpertPolicy(K=K, S=care.S, Q=Q, R=R, care=care)


def observer_gain(A, C, poles) -> np.ndarray:
    """Luenberger gain ``K3`` with ``A - K3 C = diag(poles)``, for square invertible ``C``."""
    A, C = _as2d(A), _as2d(C)
    poles = np.asarray(poles, dtype=float).ravel()
    n = A.shape[0]
    if poles.shape[0] != n:
        raise ValueError(f"need {n} poles, got {poles.shape[0]}")
    if np.any(poles >= 0):
        raise ValueError("observer poles must be real and negative")
    if C.shape != (n, n) or np.linalg.cond(C) > 1e12:
        raise UnsupportedConfiguration(
            "observer pole placement needs a square invertible C; "
            "set gains.K3 in the run configuration instead")
    return np.linalg.solve(C.T, (A - np.diag(poles)).T).T
