"""Shared domain types: communication schedules, stepsize rules, counter-based
randomness, and per-iteration trace records.

Everything here is an immutable value object; all numerics are float64.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

# Divergence guard: any recorded average iterate beyond this norm (or any
# non-finite entry) halts a run with a "diverged" status instead of raising.
DIVERGENCE_NORM = 1e12

# Purpose tags keeping independent random streams from colliding. Every
# consumer of randomness derives its generator from (seed, node, iteration,
# purpose), so no draw depends on execution order.
PURPOSE_STEP = 0
PURPOSE_DATASET = 1
PURPOSE_PARTITION = 2
PURPOSE_C_DIRECTION = 3
PURPOSE_C_RADIUS = 4
PURPOSE_PROBE = 5


class StepsizeWarning(UserWarning):
    """Raised (as a warning) for manual stepsizes above 1/L."""


def all_finite(x: np.ndarray) -> bool:
    return bool(np.isfinite(x).all())


@dataclass(frozen=True)
class CommSchedule:
    """Local-step/round structure: K local steps per round, R rounds.

    Communication (averaging) happens after iterations K, 2K, ..., RK, so the
    set of communication times is {0, K, 2K, ..., T} with T = R*K.
    """

    K: int
    R: int

    @property
    def T(self) -> int:
        return self.K * self.R

    def is_comm(self, t: int) -> bool:
        return 0 <= t <= self.T and t % self.K == 0

    def communication_times(self) -> list[int]:
        return list(range(0, self.T + 1, self.K))

    def last_comm_before(self, t: int) -> int:
        """Most recent communication time <= t."""
        return (t // self.K) * self.K


def make_schedule(K: int, R: int) -> CommSchedule:
    if K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    if R < 1:
        raise ValueError(f"R must be a positive integer, got {R}")
    return CommSchedule(K=int(K), R=int(R))


# Stepsize rules. The three named rules are the prescriptions under which the
# convergence guarantees hold; "manual" is an escape hatch for lower-bound
# constructions that need specific stepsizes like 2/(L*K).
RULE_STRONGLY_CONVEX = "strongly_convex"  # eta = 1/L
RULE_CONVEX = "convex"  # eta = 1/(2L)
RULE_NONCONVEX = "nonconvex"  # eta = 1/(3*K*L*rho)
RULE_MANUAL = "manual"

_KNOWN_RULES = (RULE_STRONGLY_CONVEX, RULE_CONVEX, RULE_NONCONVEX, RULE_MANUAL)


@dataclass(frozen=True)
class StepsizePolicy:
    rule: str
    eta: Optional[float] = None  # only read for rule="manual"

    def __post_init__(self) -> None:
        if self.rule not in _KNOWN_RULES:
            raise ValueError(f"unknown stepsize rule {self.rule!r}")
        if self.rule == RULE_MANUAL:
            if self.eta is None or not self.eta > 0:
                raise ValueError("manual stepsize requires a positive eta")


def resolve_stepsize(
    policy: StepsizePolicy,
    L: float,
    mu: float = 0.0,
    rho: Optional[float] = None,
    K: int = 1,
) -> float:
    """Turn a stepsize policy into a concrete constant eta.

    A manual eta above 1/L triggers a StepsizeWarning: large stepsizes are
    known to diverge on many of the problem families here, but divergence is
    a reportable run outcome, so the value is returned anyway.
    """
    if not L > 0:
        raise ValueError(f"smoothness constant L must be positive, got {L}")
    if policy.rule == RULE_STRONGLY_CONVEX:
        return 1.0 / L
    if policy.rule == RULE_CONVEX:
        return 1.0 / (2.0 * L)
    if policy.rule == RULE_NONCONVEX:
        if rho is None:
            raise ValueError("nonconvex stepsize rule requires a growth constant rho")
        if rho < 1.0:
            raise ValueError(f"growth constant rho must be >= 1, got {rho}")
        if K < 1:
            raise ValueError(f"K must be >= 1, got {K}")
        return 1.0 / (3.0 * K * L * rho)
    eta = float(policy.eta)  # manual
    if eta > 1.0 / L:
        warnings.warn(
            f"manual stepsize eta={eta:g} exceeds 1/L={1.0 / L:g}; "
            "runs at this stepsize frequently diverge",
            StepsizeWarning,
            stacklevel=2,
        )
    return eta


@dataclass(frozen=True)
class RngStream:
    """Counter-based randomness keyed by (seed, node, iteration, purpose).

    Each (node, iteration, purpose) triple owns an independent Philox stream,
    so any sample can be regenerated in isolation: the sequence drawn is a
    pure function of the key, never of execution order or worker count.
    """

    seed: int

    def generator(self, node: int, iteration: int, purpose: int = PURPOSE_STEP) -> np.random.Generator:
        if node < 0 or iteration < 0:
            raise ValueError("node and iteration indices must be nonnegative")
        # 64-bit lane layout: 8 bits purpose | 16 bits node | 40 bits iteration.
        lane = ((purpose & 0xFF) << 56) | ((node & 0xFFFF) << 40) | (iteration & 0xFF_FFFF_FFFF)
        key = np.array([self.seed & 0xFFFF_FFFF_FFFF_FFFF, lane], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=0, key=key))

    def sample_indices(self, node: int, iteration: int, m: int, count: int = 1) -> np.ndarray:
        """Uniform sample indices in [0, m) for one node at one iteration."""
        if m < 1:
            raise ValueError("cannot sample from an empty index range")
        return self.generator(node, iteration).integers(0, m, size=count)


RECORD_EVERY = "every"
RECORD_COMM = "comm"


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulation run needs besides the problem itself.

    x0 overrides the problem's default start (falling back to the origin);
    weight_c overrides the similarity constant used for averaging weights;
    record_node_states additionally stores per-node iterates and half-step
    iterates, which the per-step inequality checkers need.
    """

    schedule: CommSchedule
    stepsize: StepsizePolicy
    seed: int = 0
    record_granularity: str = RECORD_EVERY
    batch_size: int = 1
    x0: Optional[np.ndarray] = None
    weight_c: Optional[float] = None
    record_node_states: bool = False

    def __post_init__(self) -> None:
        if self.record_granularity not in (RECORD_EVERY, RECORD_COMM):
            raise ValueError(f"unknown record granularity {self.record_granularity!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class TraceRecord:
    """Metrics of the averaged iterate at one iteration.

    r_t is None when the problem has no known optimum. w_t is the averaging
    weight (1 adjacent to communication times, the similarity constant c
    elsewhere) used to form the weighted average iterate.
    """

    t: int
    is_comm: bool
    e_t: float
    r_t: Optional[float]
    h_t: float
    V_t: float
    w_t: float
