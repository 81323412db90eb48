"""Closed-loop co-simulation of expert, plant, observer and history stacks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import WeightVector, extract_solution
from .control import ExpertPolicy, lqr_gain, observer_gain
from .errors import ExtractionError
from .numerics import range_projection_residual, rk4_step
from .observer import WeightUpdate
from .scenarios import Excitation, Scenario
from .stack import HistoryStack, StackEntry, StackPair, SwapReason, informativity_report

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("t", "delta_norm", "gain_error_fro", "sigma_u_residual", "cond_reg")


@dataclass
class StepInfo:
    """What a hook sees after each integration step (and once at ``t = 0``)."""

    t: float
    x: np.ndarray
    x_hat: np.ndarray
    w: np.ndarray
    u: np.ndarray
    update: WeightUpdate
    stacks: StackPair
    swapped: bool
    segment: int


Hook = Callable[[StepInfo], None]


@dataclass
class SimulationLog:
    n: int
    m: int
    rows: list = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return (list(METRIC_COLUMNS)
                + [f"q_hat_{i}" for i in range(self.n)]
                + [f"r_hat_{j}" for j in range(self.m)]
                + [f"x_{i}" for i in range(self.n)]
                + [f"x_hat_{i}" for i in range(self.n)]
                + [f"u_{j}" for j in range(self.m)])

    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(self.columns))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, self.columns.index(name)]


@dataclass
class SimulationResult:
    scenario: Scenario
    expert: ExpertPolicy
    K3: np.ndarray
    log: SimulationLog
    x: np.ndarray
    x_hat: np.ndarray
    w: np.ndarray
    stacks: StackPair
    update: WeightUpdate
    swap_times: list
    delta_at_first_swap: float
    fi_first_time: float | None
    t_final: float

    def weights(self) -> WeightVector:
        return WeightVector.from_array(self.scenario.layout, self.w, self.scenario.r1)


class _Segment:
    """Quantities that are constant while one stack is active."""

    def __init__(self, stack: HistoryStack | None, k4: float, eps: float, p: int):
        if stack is None or len(stack) == 0:
            self.update = WeightUpdate.idle(p)
            self.sigma_u_residual = np.nan
            self.cond = np.nan
            return
        self.update = WeightUpdate.from_stack(stack, k4, eps)
        su = stack.sigma_u
        self.sigma_u_residual = (range_projection_residual(stack.sigma_hat, su)
                                 if np.any(stack.sigma_hat) else float(np.linalg.norm(su)))
        self.cond = stack.condition()


def simulate_expert(scn: Scenario, T: float | None = None, h: float | None = None,
                    hooks: Sequence[Hook] = (), log_every: int | None = None,
                    fi_tol: float = 1e-6, track_informativity: bool = False,
                    log: SimulationLog | None = None) -> SimulationResult:
    """Run the expert in closed loop while the observer learns its cost.

    The plant, observer and weights are advanced together by one RK4 step
    of size ``h``. Samples are offered to the filling stack every
    ``scn.data_period`` seconds; stack swaps are evaluated at those instants.
    Rows are appended to ``log`` as they are produced, so a caller-owned log
    keeps the partial time series if the run fails.
    """
    T = scn.T if T is None else T
    h = scn.h if h is None else h
    if not (T > 0 and h > 0):
        raise ValueError("T and h must be positive")
    if h > scn.data_period * (1 + 1e-12):
        raise ValueError("integration step must not exceed the data period")
    if scn.excitation_mode not in ("input", "disturbance"):
        raise ValueError(f"unknown excitation mode {scn.excitation_mode!r}")
    sys = scn.sys
    n, m, p = sys.n, sys.m, scn.layout.n_weights
    expert = lqr_gain(sys.A, sys.B, scn.Q, scn.R)
    K = expert.K
    K3 = np.atleast_2d(scn.K3) if scn.K3 is not None else observer_gain(sys.A, sys.C, scn.observer_poles)
    exc = Excitation(scn.excitation, m)
    record_excitation = scn.excitation_mode == "input"
    if log_every is None:
        log_every = max(1, int(round(0.01 / h)))

    def mk_stack():
        return HistoryStack(scn.capacity, sys.A, sys.B, scn.r1, scn.eps, scn.cond_threshold)

    pair = StackPair(mk_stack(), mk_stack(), scn.purge_period, scn.purge_policy)
    seg = _Segment(None, scn.k4, scn.eps, p)
    A, B, C = sys.A, sys.B, sys.C

    def field_(t, z):
        x, xh, w = z[:n], z[n:2 * n], z[2 * n:]
        d = exc(t)
        u_applied = K @ x + d
        dx = A @ x + B @ u_applied
        dxh = A @ xh + B @ u_applied + K3 @ (C @ x - C @ xh)
        return np.concatenate([dx, dxh, seg.update.rate(w)])

    def recorded_input(t, x):
        u = K @ x
        return u + exc(t) if record_excitation else u

    z = np.concatenate([np.asarray(scn.x0, dtype=float), scn.initial_estimate(), scn.initial_weights()])
    if log is None:
        log = SimulationLog(n, m)
    steps = int(round(T / h))
    next_sample = 0
    delta_first = np.nan
    fi_first = None
    segment = 0

    def emit(k, t, swapped):
        x, xh, w = z[:n], z[n:2 * n], z[2 * n:]
        u = recorded_input(t, x)
        if hooks:
            info = StepInfo(t, x, xh, w, u, seg.update, pair, swapped, segment)
            for hook in hooks:
                hook(info)
        if k % log_every and k != steps:
            return
        dn = float(np.linalg.norm(seg.update.delta(w))) if pair.active else np.nan
        wv = WeightVector.from_array(scn.layout, w, scn.r1)
        try:
            est = extract_solution(wv, B)
            gerr = float(np.linalg.norm(est.K - K))
            qd, rd = np.diag(est.Q), np.diag(est.R)
        except ExtractionError:
            gerr = np.nan
            qd = wv.w_Q[_diag_index(n)]
            rd = np.concatenate([[scn.r1], wv.w_R_minus])[_diag_index(m)]
        log.rows.append([t, dn, gerr, seg.sigma_u_residual, seg.cond, *qd, *rd, *x, *xh, *u])

    for k in range(steps + 1):
        t = k * h
        swapped = False
        if t >= next_sample * scn.data_period - 1e-9 * h:
            next_sample += 1
            x, xh = z[:n], z[n:2 * n]
            pair.h2.try_add(StackEntry(t, xh, recorded_input(t, x)))
            if track_informativity and fi_first is None:
                if informativity_report(pair.h2, fi_tol).fi_ok:
                    fi_first = t
            if pair.swap_and_purge(t) is SwapReason.SWAPPED:
                swapped = True
                segment += 1
                seg = _Segment(pair.h1, scn.k4, scn.eps, p)
                if pair.swap_count == 1:
                    delta_first = float(np.linalg.norm(seg.update.delta(z[2 * n:])))
                logger.debug("t=%.3f swap %d cond=%.3g", t, pair.swap_count, seg.cond)
        emit(k, t, swapped)
        if k == steps:
            break
        z = rk4_step(field_, t, z, h)

    return SimulationResult(
        scenario=scn, expert=expert, K3=K3, log=log,
        x=z[:n].copy(), x_hat=z[n:2 * n].copy(), w=z[2 * n:].copy(),
        stacks=pair, update=seg.update, swap_times=list(pair.swap_times),
        delta_at_first_swap=delta_first, fi_first_time=fi_first, t_final=steps * h,
    )


def _diag_index(n: int) -> np.ndarray:
    i, j = np.triu_indices(n)
    return np.flatnonzero(i == j)
