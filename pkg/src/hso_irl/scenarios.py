"""Benchmark problems and the sum-of-sinusoids excitation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisLayout, WeightVector
from .observer import LtiSystem

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea and Flood), exact 64-bit arithmetic.

    ``uniform()`` maps the top 53 bits of each output to ``[0, 1)``.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)


@dataclass(frozen=True)
class ExcitationSpec:
    count: int = 30
    amplitude: float = 1.0
    freq_range: tuple[float, float] = (0.001, 0.1)
    phase_range: tuple[float, float] = (0.0, math.pi)
    seed: int = 0
    target_channels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("excitation count must be non-negative")
        if not self.freq_range[0] <= self.freq_range[1]:
            raise ValueError("frequency range must be ascending")


class Excitation:
    """Sum of sinusoids per input channel.

    Frequencies (Hz) and phases (rad) are drawn from :class:`SplitMix64`
    seeded with ``spec.seed``: for each target channel in order, ``count``
    pairs ``(frequency, phase)`` are drawn, frequency first.
    """

    def __init__(self, spec: ExcitationSpec, m: int):
        self.spec = spec
        self.m = m
        channels = range(m) if spec.target_channels is None else spec.target_channels
        self.channels = np.array(list(channels), dtype=int)
        if self.channels.size and (self.channels.min() < 0 or self.channels.max() >= m):
            raise ValueError(f"target channels {spec.target_channels} out of range for m={m}")
        rng = SplitMix64(spec.seed)
        freqs = np.zeros((self.channels.size, spec.count))
        phases = np.zeros_like(freqs)
        for c in range(self.channels.size):
            for k in range(spec.count):
                freqs[c, k] = rng.uniform(*spec.freq_range)
                phases[c, k] = rng.uniform(*spec.phase_range)
        self.omega = 2.0 * math.pi * freqs
        self.phases = phases

    def __call__(self, t: float) -> np.ndarray:
        out = np.zeros(self.m)
        if self.spec.count and self.channels.size:
            vals = self.spec.amplitude * np.sin(self.omega * t + self.phases).sum(axis=1)
            out[self.channels] = vals
        return out


def excitation_signal(spec: ExcitationSpec, t: float, m: int) -> np.ndarray:
    return Excitation(spec, m)(t)


@dataclass(frozen=True)
class Scenario:
    """A complete problem: plant, expert cost, observer, stack schedule and excitation.

    ``w0=None`` starts the cost estimate at ``S = Q = 0``, ``R = r1 I``.
    ``excitation_mode`` selects where the excitation enters: ``"input"`` adds
    it to the expert command (the recorded input then carries it), while
    ``"disturbance"`` injects it through ``B`` as a known plant perturbation
    and records the expert command alone.
    """

    name: str
    sys: LtiSystem
    Q: np.ndarray
    R: np.ndarray
    x0: np.ndarray
    excitation: ExcitationSpec
    observer_poles: tuple[float, ...] | None
    K3: np.ndarray | None = None
    data_period: float = 0.08
    purge_period: float = 2.0
    purge_policy: str = "and"
    cond_threshold: float = 1e8
    eps: float = 1e-3
    r1: float = 1.0
    k4: float = 50.0
    stack_size: int | None = None
    x_hat0: np.ndarray | None = None
    w0: np.ndarray | None = None
    excitation_mode: str = "disturbance"
    h: float = 0.01
    T: float = 50.0
    extra: dict = field(default_factory=dict)

    @property
    def layout(self) -> BasisLayout:
        return self.sys.layout

    @property
    def capacity(self) -> int:
        return self.stack_size if self.stack_size is not None else self.layout.n_weights

    def initial_weights(self) -> np.ndarray:
        if self.w0 is not None:
            return np.asarray(self.w0, dtype=float).copy()
        n, m = self.sys.n, self.sys.m
        return WeightVector.from_costs(np.zeros((n, n)), np.zeros((n, n)), self.r1 * np.eye(m), self.r1).as_array()

    def initial_estimate(self) -> np.ndarray:
        if self.x_hat0 is not None:
            return np.asarray(self.x_hat0, dtype=float).copy()
        return np.zeros(self.sys.n)

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


def academic_scenario() -> Scenario:
    """Decoupled three-state example whose inverse problem has a family of solutions."""
    A = np.diag([3.0, 5.0, 7.0])
    B = np.diag([11.0, 13.0, 17.0])
    return Scenario(
        name="academic",
        sys=LtiSystem(A, B, np.eye(3)),
        Q=np.diag([1.0, 4.0, 3.0]),
        R=np.diag([1.0, 1.75, 4.0]),
        x0=np.full(3, 0.5),
        excitation=ExcitationSpec(count=30, amplitude=1.0, freq_range=(0.001, 0.1),
                                  phase_range=(0.0, math.pi), seed=1),
        observer_poles=(-0.1, -1.5, -2.0),
        data_period=0.08,
        purge_period=2.0,
        cond_threshold=1e8,
        eps=0.1,
        r1=1.0,
        k4=50.0,
        h=0.01,
        T=50.0,
    )


@dataclass(frozen=True)
class QuadcopterParams:
    l: float = 0.092
    I_xx: float = 0.001225
    I_yy: float = 0.001234
    I_zz: float = 0.002303
    k_t: float = 0.01
    g: float = 9.81
    mass: float = 0.552
    k_p11: float = 5.25
    k_p12: float = 6.0
    k_p13: float = 3.0
    k_p21: float = 2.0
    k_p22: float = 1.0
    k_p23: float = 0.35
    k_d1: float = 0.5
    k_d2: float = 0.4
    k_d3: float = 0.1

    def __post_init__(self):
        bad = [k for k, v in self.__dict__.items() if not v > 0]
        if bad:
            raise ValueError(f"quadcopter parameters must be positive: {bad}")

    @property
    def b1(self) -> float:
        return self.l / self.I_xx

    @property
    def b2(self) -> float:
        return self.l / self.I_yy

    @property
    def b3(self) -> float:
        return 1.0 / self.I_zz


# state order and input order of the linearised quadcopter
QUAD_STATES = ("x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r")
QUAD_INPUTS = ("vx_d", "vy_d", "vz_d", "r_d")


def quadcopter_matrices(p: QuadcopterParams) -> tuple[np.ndarray, np.ndarray]:
    """Velocity-command model of a quadcopter under its attitude autopilot, linearised at hover.

    The vertical-velocity row has a positive self-coefficient, so the open
    loop is unstable in altitude; the expert's feedback stabilises it.
    """
    ix = {s: i for i, s in enumerate(QUAD_STATES)}
    A = np.zeros((12, 12))
    B = np.zeros((12, 4))
    for pos, vel in (("x", "vx"), ("y", "vy"), ("z", "vz"), ("phi", "p"), ("theta", "q"), ("psi", "r")):
        A[ix[pos], ix[vel]] = 1.0
    drag = p.k_t / p.mass
    A[ix["vx"], ix["theta"]] = -p.g
    A[ix["vx"], ix["vx"]] = -drag
    A[ix["vy"], ix["phi"]] = p.g
    A[ix["vy"], ix["vy"]] = -drag
    A[ix["vz"], ix["vz"]] = p.k_p13 - drag
    B[ix["vz"], 2] = -p.k_p13
    roll = p.b1 * math.pi * p.k_p21 * p.k_p12 / (4.0 * p.g)
    A[ix["p"], ix["vy"]] = roll
    B[ix["p"], 1] = -roll
    A[ix["p"], ix["p"]] = -p.b1 * p.k_d1
    A[ix["p"], ix["phi"]] = -p.b1 * p.k_p21
    pitch = p.b2 * math.pi * p.k_p22 * p.k_p11 / (4.0 * p.g)
    A[ix["q"], ix["vx"]] = -pitch
    B[ix["q"], 0] = pitch
    A[ix["q"], ix["q"]] = -p.b2 * p.k_d2
    A[ix["q"], ix["theta"]] = -p.b2 * p.k_p22
    A[ix["r"], ix["r"]] = -p.b3 * p.k_d3
    B[ix["r"], 3] = p.b3 * p.k_d3
    A[ix["r"], ix["psi"]] = -p.b3 * p.k_p23
    return A, B


def quadcopter_scenario(p: QuadcopterParams | None = None) -> Scenario:
    """Surrogate LQR pilot flying the linearised quadcopter through velocity commands."""
    p = p or QuadcopterParams()
    A, B = quadcopter_matrices(p)
    x0 = np.array([0.5, 0.5, 0.5, 0.1, 0.1, 0.1, 0.05, 0.05, 0.5, 0.05, 0.05, 0.05])
    return Scenario(
        name="quadcopter",
        sys=LtiSystem(A, B, np.eye(12)),
        Q=np.diag([9.5752, 6.9139, 2.8378, 0, 0, 0, 0, 0, 11.6834, 0, 0, 0]),
        R=np.diag([9.572, 3.4773, 14.4034, 0.1707]),
        x0=x0,
        excitation=ExcitationSpec(count=30, amplitude=0.03, freq_range=(0.001, 10.0),
                                  phase_range=(0.0, math.pi), seed=1),
        observer_poles=(-1.0,) * 8 + (-2.0,) * 4,
        data_period=0.08,
        purge_period=10.0,
        cond_threshold=1e10,
        eps=0.002,
        r1=1.0,
        k4=50.0,
        h=1e-3,
        T=60.0,
        extra={"params": p},
    )


SCENARIOS = {"academic": academic_scenario, "quadcopter": quadcopter_scenario}
