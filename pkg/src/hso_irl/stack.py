"""History stacks of recorded (state estimate, input) samples.

Two stacks are kept: ``h1`` drives the weight update, ``h2`` fills with new
samples. Once ``h2`` is well conditioned (and, by default, enough time has
passed since the previous swap) it replaces ``h1`` and is emptied.
"""

from __future__ import annotations

import copy
import csv
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisLayout, build_regressor_block
from .errors import SingularityError
from .numerics import DEFAULT_RANK_TOL, numerical_rank, range_projection_residual, regularized_condition

logger = logging.getLogger(__name__)

# Relative margin a replacement must beat the current conditioning by; keeps
# round-off from swapping in numerically identical samples.
_IMPROVEMENT_RTOL = 1e-12


@dataclass(frozen=True)
class StackEntry:
    t: float
    x_hat: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_hat", np.asarray(self.x_hat, dtype=float).ravel().copy())
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float).ravel().copy())
        if not (np.isfinite(self.t) and np.all(np.isfinite(self.x_hat)) and np.all(np.isfinite(self.u))):
            raise ValueError("stack entries must be finite")
        if self.t < 0:
            raise ValueError("stack entry time must be non-negative")


class AddKind(enum.Enum):
    APPENDED = "appended"
    REPLACED = "replaced"
    REJECTED = "rejected"


@dataclass(frozen=True)
class AddDecision:
    kind: AddKind
    slot: int | None = None


class HistoryStack:
    """Fixed-capacity buffer of samples and the regressor assembled from them.

    The entries are the source of truth; ``sigma_hat`` and ``sigma_u`` are
    rebuilt from per-entry blocks on demand.
    """

    def __init__(self, capacity: int, A, B, r1: float = 1.0, eps: float = 1e-3,
                 cond_threshold: float = 1e8):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.layout = BasisLayout(self.A.shape[0], self.B.shape[1])
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        if capacity < self.layout.n_weights:
            logger.warning("stack capacity %d is below the %d unknown weights", capacity,
                           self.layout.n_weights)
        if eps < 0:
            raise ValueError("eps must be non-negative")
        self.capacity = int(capacity)
        self.r1 = float(r1)
        self.eps = float(eps)
        self.cond_threshold = float(cond_threshold)
        self.entries: list[StackEntry] = []
        self._rows: list[np.ndarray] = []
        self._consts: list[np.ndarray] = []

    def __len__(self):
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    @property
    def rows_per_entry(self) -> int:
        return self.layout.m + 1

    def _block(self, entry: StackEntry):
        blk = build_regressor_block(entry.x_hat, entry.u, self.A, self.B, self.r1)
        return blk.rows(), blk.sigma_u_block

    @property
    def sigma_hat(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.layout.n_weights))
        return np.vstack(self._rows)

    @property
    def sigma_u(self) -> np.ndarray:
        if not self._consts:
            return np.zeros(0)
        return np.concatenate(self._consts)

    def states(self) -> np.ndarray:
        """Stored state estimates as columns, shape ``(n, len(self))``."""
        if not self.entries:
            return np.zeros((self.layout.n, 0))
        return np.column_stack([e.x_hat for e in self.entries])

    def condition(self) -> float:
        """Condition number of ``sigma_hat^T sigma_hat + eps I`` (inf when singular)."""
        if not self.entries:
            return np.inf
        try:
            return regularized_condition(self.sigma_hat, self.eps)
        except SingularityError:
            return np.inf

    def is_ready(self) -> bool:
        if not self.full:
            return False
        S = self.sigma_hat
        if not np.any(S):
            return False
        return self.condition() <= self.cond_threshold

    def clear(self):
        self.entries.clear()
        self._rows.clear()
        self._consts.clear()

    def copy(self) -> "HistoryStack":
        return copy.deepcopy(self)

    def _cond_from_gram(self, grams: np.ndarray) -> np.ndarray:
        lam = np.linalg.eigvalsh(grams)
        lam_min = np.maximum(lam[..., 0], 0.0) + self.eps
        lam_max = np.maximum(lam[..., -1], 0.0) + self.eps
        with np.errstate(divide="ignore"):
            return np.where(lam_min > 0, lam_max / np.where(lam_min > 0, lam_min, 1.0), np.inf)

    def replacement_conditions(self, candidate: StackEntry) -> tuple[float, np.ndarray]:
        """Current condition number and the one obtained by putting ``candidate`` in each slot."""
        rows, _ = self._block(candidate)
        S = self.sigma_hat
        G = S.T @ S
        blocks = np.stack(self._rows)                      # (N, m+1, p)
        drop = np.einsum("kip,kiq->kpq", blocks, blocks)   # B_k^T B_k
        grams = G[None, :, :] - drop + (rows.T @ rows)[None, :, :]
        return float(self._cond_from_gram(G)), self._cond_from_gram(grams)

    def try_add(self, candidate: StackEntry) -> AddDecision:
        if not self.full:
            r, c = self._block(candidate)
            self.entries.append(candidate)
            self._rows.append(r)
            self._consts.append(c)
            return AddDecision(AddKind.APPENDED, len(self.entries) - 1)
        current, trial = self.replacement_conditions(candidate)
        slot = int(np.argmin(trial))
        best = trial[slot]
        if np.isfinite(best) and best < current * (1.0 - _IMPROVEMENT_RTOL):
            r, c = self._block(candidate)
            self.entries[slot] = candidate
            self._rows[slot] = r
            self._consts[slot] = c
            return AddDecision(AddKind.REPLACED, slot)
        return AddDecision(AddKind.REJECTED)

    def to_csv(self, path):
        n, m = self.layout.n, self.layout.m
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_hat_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)])
            for e in self.entries:
                w.writerow([f"{v:.9g}" for v in (e.t, *e.x_hat, *e.u)])


@dataclass(frozen=True)
class InformativityReport:
    span_rank: int
    span_ok: bool
    sigma_u_residual: float
    sigma_u_norm: float
    fi_ok: bool
    degenerate: bool


def informativity_report(stack: HistoryStack, fi_tol: float = 1e-6,
                         rank_tol: float = DEFAULT_RANK_TOL) -> InformativityReport:
    """Check that the stored states span the state space and that ``sigma_u`` lies in range(sigma_hat)."""
    if len(stack) == 0:
        raise ValueError("informativity of an empty stack is undefined")
    X = stack.states()
    span_rank = numerical_rank(X, rank_tol) if np.any(X) else 0
    span_ok = span_rank == stack.layout.n
    su = stack.sigma_u
    su_norm = float(np.linalg.norm(su))
    S = stack.sigma_hat
    if su_norm == 0.0:
        residual = 0.0
    elif not np.any(S):
        residual = su_norm
    else:
        residual = range_projection_residual(S, su, rank_tol)
    return InformativityReport(
        span_rank=span_rank,
        span_ok=span_ok,
        sigma_u_residual=residual,
        sigma_u_norm=su_norm,
        fi_ok=bool(span_ok and residual <= fi_tol * su_norm),
        degenerate=su_norm == 0.0,
    )


class SwapReason(enum.Enum):
    SWAPPED = "swapped"
    NOT_READY = "not_ready"
    TOO_SOON = "too_soon"
    EMPTY = "empty"


@dataclass
class StackPair:
    """The active stack ``h1`` and the filling stack ``h2`` plus the swap schedule.

    ``policy="and"`` swaps when ``h2`` is ready and ``purge_period`` has
    elapsed since the last swap. ``policy="or"`` swaps when ``h2`` is ready,
    or when the period has elapsed and ``h2`` holds any data.
    """

    h1: HistoryStack
    h2: HistoryStack
    purge_period: float
    policy: str = "and"
    last_swap: float = 0.0
    swap_count: int = 0
    swap_times: list = field(default_factory=list)

    def __post_init__(self):
        if self.policy not in ("and", "or"):
            raise ValueError(f"unknown purge policy {self.policy!r}")

    @property
    def active(self) -> bool:
        return len(self.h1) > 0

    def swap_and_purge(self, now: float) -> SwapReason:
        ready = self.h2.is_ready()
        elapsed = now - self.last_swap >= self.purge_period
        if self.policy == "and":
            if not ready:
                return SwapReason.NOT_READY
            if not elapsed:
                return SwapReason.TOO_SOON
        else:
            if len(self.h2) == 0:
                return SwapReason.EMPTY
            if not (ready or elapsed):
                return SwapReason.NOT_READY
        self.h1, self.h2 = self.h2, self.h1
        self.h2.clear()
        self.last_swap = now
        self.swap_count += 1
        self.swap_times.append(now)
        return SwapReason.SWAPPED
