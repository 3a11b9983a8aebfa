"""Verification layer: evaluate convergence-rate guarantees against recorded
traces, certify the two lower-bound constructions, check the per-step
inequalities the guarantees rest on, and fit empirical rates.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    RULE_CONVEX,
    RULE_NONCONVEX,
    RULE_STRONGLY_CONVEX,
    RunConfig,
    TraceRecord,
    make_schedule,
)
from .engine import RunResult, run_local_sgd, run_many
from .problems import ProblemInstance

# Upper bounds are accepted up to this relative slack; expectation bounds
# additionally get a 3-standard-error cushion computed from the seed sweep.
REL_SLACK = 1e-12


def _upper_ok(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + REL_SLACK * max(1.0, abs(rhs))


def _lower_ok(lhs: float, rhs: float) -> bool:
    return lhs >= rhs - REL_SLACK * max(1.0, abs(rhs))


@dataclass
class BoundReport:
    theorem: str
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    inputs_echo: dict
    advisory: bool = False
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.satisfied else ("ADVISORY-FAIL" if self.advisory else "FAIL")
        return (f"[{status}] {self.theorem}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"margin={self.margin:.6g} {self.detail}".rstrip())


@dataclass
class LemmaReport:
    name: str
    satisfied: bool
    worst_violation: float
    checks: int
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.satisfied else "FAIL"
        return (f"[{status}] {self.name}: worst_violation={self.worst_violation:.3g} "
                f"over {self.checks} checks {self.detail}".rstrip())


@dataclass
class MeanTrace:
    """Across-seed means of the per-iteration metrics, with standard errors."""

    t: np.ndarray
    e: np.ndarray
    h: np.ndarray
    se_e: np.ndarray
    se_h: np.ndarray
    count: int
    config: RunConfig
    r: Optional[np.ndarray] = None
    se_r: Optional[np.ndarray] = None


def aggregate_traces(results: Sequence[RunResult]) -> MeanTrace:
    if len(results) < 2:
        raise ValueError("need at least two runs to estimate standard errors")
    t0 = results[0].metric("t")
    schedule = results[0].config.schedule
    for res in results:
        if res.status != "completed":
            raise ValueError("cannot aggregate diverged runs")
        if res.config.schedule != schedule:
            raise ValueError("schedules differ between runs")
        if not np.array_equal(res.metric("t"), t0):
            raise ValueError("trace grids differ between runs")
    count = len(results)

    def stack(name: str) -> np.ndarray:
        return np.stack([res.metric(name) for res in results])

    def sem(mat: np.ndarray) -> np.ndarray:
        return np.std(mat, axis=0, ddof=1) / np.sqrt(count)

    e = stack("e_t")
    h = stack("h_t")
    r_mat = stack("r_t")
    has_r = not np.isnan(r_mat).any()
    return MeanTrace(
        t=t0.astype(int),
        e=np.mean(e, axis=0),
        h=np.mean(h, axis=0),
        se_e=sem(e),
        se_h=sem(h),
        count=count,
        config=results[0].config,
        r=np.mean(r_mat, axis=0) if has_r else None,
        se_r=sem(r_mat) if has_r else None,
    )


def _require_rule(config: RunConfig, rule: str, theorem: str) -> None:
    if config.stepsize.rule != rule:
        raise ValueError(
            f"{theorem} applies to runs under the {rule!r} stepsize rule, "
            f"got {config.stepsize.rule!r}"
        )


def check_theorem1(
    run: Union[RunResult, MeanTrace],
    L: float,
    mu: float,
    r0: Optional[float] = None,
) -> BoundReport:
    """Geometric envelope for strongly convex interpolating problems at
    eta = 1/L: distance-squared to the optimum decays at least as fast as
    (1 - mu/L)^t, checked at every recorded t and round over round."""
    if not mu > 0:
        raise ValueError("the geometric guarantee needs strong convexity mu > 0")
    _require_rule(run.config, RULE_STRONGLY_CONVEX, "T1")
    if isinstance(run, MeanTrace):
        t, r, se = run.t, run.r, run.se_r
    else:
        t, r, se = run.metric("t").astype(int), run.metric("r_t"), None
    if r is None or np.isnan(r).any():
        raise ValueError("T1 needs the distance metric (known optimum)")
    if r0 is None:
        r0 = float(r[0])
    rate = 1.0 - mu / L
    bound = r0 * rate ** t.astype(float)
    cushion = 3.0 * se if se is not None else np.zeros_like(bound)
    violations = int(np.sum(r > bound + cushion + REL_SLACK * np.maximum(1.0, bound)))

    # round-over-round contraction between consecutive communication times
    K = run.config.schedule.K
    comm = [i for i, ti in enumerate(t) if ti % K == 0]
    round_viol = 0
    for a, b in zip(comm, comm[1:]):
        step = rate ** float(t[b] - t[a])
        rhs = float(r[a]) * step
        cush = 3.0 * float(se[b]) if se is not None else 0.0
        if not _upper_ok(float(r[b]), rhs + cush):
            round_viol += 1

    lhs = float(r[-1])
    rhs_final = float(bound[-1]) + (3.0 * float(se[-1]) if se is not None else 0.0)
    ok = violations == 0 and round_viol == 0 and _upper_ok(lhs, rhs_final)
    return BoundReport(
        theorem="T1",
        lhs=lhs,
        rhs=rhs_final,
        satisfied=ok,
        margin=rhs_final - lhs,
        inputs_echo={"L": L, "mu": mu, "K": K, "T": int(t[-1]), "r0": r0},
        detail=f"pointwise_violations={violations} round_violations={round_viol}",
    )


def check_theorem2(
    problem: ProblemInstance,
    runs: Union[RunResult, Sequence[RunResult]],
    c: Optional[float] = None,
    x0_dist: Optional[float] = None,
    c_is_estimate: bool = False,
) -> BoundReport:
    """Sublinear bound for convex interpolating problems at eta = 1/(2L),
    K >= 2: the gap at the weighted average iterate is at most
    2KL d0 / (cKT + 2(1-c)T). With an estimated c the report is advisory
    (the estimator upper-bounds c, which can only shrink the rhs)."""
    results = [runs] if isinstance(runs, RunResult) else list(runs)
    config = results[0].config
    _require_rule(config, RULE_CONVEX, "T2")
    K, T = config.schedule.K, config.schedule.T
    if K < 2:
        raise ValueError("the weighted-average bound requires K >= 2")
    if c is None:
        c = problem.c
    if c is None:
        raise ValueError("similarity constant c is required (known or estimated)")
    if x0_dist is None:
        first = results[0].trace[0]
        if first.r_t is None:
            raise ValueError("x0_dist not provided and no known optimum to derive it")
        x0_dist = first.r_t
    gaps = np.array([problem.gap(res.weighted_average) for res in results])
    lhs = float(np.mean(gaps))
    cushion = 0.0
    if len(results) > 1:
        cushion = 3.0 * float(np.std(gaps, ddof=1) / np.sqrt(len(gaps)))
    rhs = 2.0 * K * problem.L * x0_dist / (c * K * T + 2.0 * (1.0 - c) * T)
    ok = _upper_ok(lhs, rhs + cushion)
    return BoundReport(
        theorem="T2",
        lhs=lhs,
        rhs=rhs + cushion,
        satisfied=ok,
        margin=rhs + cushion - lhs,
        inputs_echo={"L": problem.L, "c": c, "K": K, "T": T, "d0": x0_dist,
                     "seeds": len(results)},
        advisory=c_is_estimate,
        detail="c estimated (advisory)" if c_is_estimate else "",
    )


def check_theorem3(
    run: Union[RunResult, MeanTrace],
    L: float,
    rho: float,
    e0: Optional[float] = None,
) -> BoundReport:
    """Stationarity bound under the gradient-growth condition at
    eta = 1/(3KLrho): the smallest recorded squared gradient norm before T
    is at most 27 K L rho e0 / T."""
    _require_rule(run.config, RULE_NONCONVEX, "T3")
    K, T = run.config.schedule.K, run.config.schedule.T
    if isinstance(run, MeanTrace):
        t, h, se = run.t, run.h, run.se_h
        e_first = float(run.e[0])
    else:
        expected = 1.0 / (3.0 * K * L * rho)
        if abs(run.eta - expected) > 1e-9 * expected:
            raise ValueError(
                f"run stepsize {run.eta:g} does not match 1/(3KL*rho)={expected:g}; "
                "rerun with the measured growth constant"
            )
        t, h, se = run.metric("t").astype(int), run.metric("h_t"), None
        e_first = float(run.trace[0].e_t)
    if e0 is None:
        e0 = e_first
    mask = t < T
    idx = int(np.argmin(h[mask]))
    lhs = float(h[mask][idx])
    cushion = 3.0 * float(se[mask][idx]) if se is not None else 0.0
    rhs = 27.0 * K * L * rho * e0 / T
    ok = _upper_ok(lhs, rhs + cushion)
    return BoundReport(
        theorem="T3",
        lhs=lhs,
        rhs=rhs + cushion,
        satisfied=ok,
        margin=rhs + cushion - lhs,
        inputs_echo={"L": L, "rho": rho, "K": K, "T": T, "e0": e0},
    )


def _average_sequence(result: RunResult) -> np.ndarray:
    if result.node_states is None:
        raise ValueError("certificate needs record_node_states=True")
    return np.mean(result.node_states, axis=1)


def certify_prop1(result: RunResult, L: float, K: int, T: int) -> BoundReport:
    """Lower-bound certificate for the one-curved-node worst case: from
    x0 = 1 with eta <= 1/L, the final gap stays above K*L/(16*T), the
    averaged iterate never increases, and each round contracts it by at
    most a factor (n-1)/n."""
    sched = result.config.schedule
    if sched.K != K or sched.T != T:
        raise ValueError(f"run schedule (K={sched.K}, T={sched.T}) does not match ({K}, {T})")
    if result.eta > 1.0 / L + REL_SLACK:
        raise ValueError("certificate holds only for eta <= 1/L")
    xbar = _average_sequence(result)[:, 0]
    if abs(xbar[0] - 1.0) > 1e-12:
        raise ValueError("certificate requires the run to start at x0 = 1")
    n = result.node_states.shape[1]
    monotone = bool(np.all(np.diff(xbar) <= 1e-12))
    shrink = (n - 1.0) / n
    round_ok = True
    worst_round = np.inf
    for r in range(sched.R):
        before, after = xbar[r * K], xbar[(r + 1) * K]
        worst_round = min(worst_round, after - shrink * before)
        if not _lower_ok(after, shrink * before):
            round_ok = False
    lhs = result.trace[-1].e_t
    rhs = K * L / (16.0 * T)
    ok = _lower_ok(lhs, rhs) and monotone and round_ok
    return BoundReport(
        theorem="P1",
        lhs=lhs,
        rhs=rhs,
        satisfied=ok,
        margin=lhs - rhs,
        inputs_echo={"L": L, "K": K, "T": T, "n": n, "eta": result.eta},
        detail=f"monotone={monotone} round_recursion_ok={round_ok} "
               f"worst_round_slack={worst_round:.3g}",
    )


def certify_prop2(result: RunResult, L: float, K: int) -> BoundReport:
    """Nonconvergence certificate for the two-node instance: for stepsizes in
    [2/(LK), 1/L] from x0 = 1 the averaged iterate at every communication
    time stays >= 1 and every recorded squared gradient norm stays >= L^2/16."""
    lo, hi = 2.0 / (L * K), 1.0 / L
    if not (lo - REL_SLACK <= result.eta <= hi + REL_SLACK):
        raise ValueError(
            f"certificate holds only for eta in [2/(LK), 1/L] = [{lo:g}, {hi:g}]; "
            f"run used {result.eta:g}"
        )
    if result.config.schedule.K != K:
        raise ValueError("run schedule does not match the stated K")
    states = result.node_states
    if states is None:
        raise ValueError("certificate needs record_node_states=True")
    xbar = np.mean(states, axis=1)[:, 0]
    if abs(xbar[0] - 1.0) > 1e-12:
        raise ValueError("certificate requires the run to start at x0 = 1")
    comm = xbar[:: K]
    comm_ok = bool(np.all(comm >= 1.0 - 1e-12))
    curved_ok = bool(np.all(states[:, 0, 0] >= -1e-12))
    concave_ok = bool(np.all(states[:, 1, 0] >= 1.0 - 1e-12))
    h = np.array([rec.h_t for rec in result.trace])
    lhs = float(np.min(h))
    rhs = L * L / 16.0
    ok = _lower_ok(lhs, rhs) and comm_ok and curved_ok and concave_ok
    return BoundReport(
        theorem="P2",
        lhs=lhs,
        rhs=rhs,
        satisfied=ok,
        margin=lhs - rhs,
        inputs_echo={"L": L, "K": K, "T": result.config.schedule.T, "eta": result.eta},
        detail=f"comm_iterates_ge_1={comm_ok} node1_nonneg={curved_ok} "
               f"node2_ge_1={concave_ok}",
    )


MODEL_GEOMETRIC = "geometric"
MODEL_RECIPROCAL = "reciprocal_linear"


@dataclass
class RateFit:
    model: str
    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]


def fit_rate(
    trace: Union[Sequence[TraceRecord], np.ndarray],
    model: str,
    window: Optional[tuple[int, int]] = None,
) -> RateFit:
    """Least-squares rate fit on the transformed scale.

    geometric: log(e_t) vs t (slope = log of the per-iteration factor);
    reciprocal_linear: 1/e_t vs t. Under the geometric model the series is
    truncated at the first nonpositive value inside the window.
    """
    if isinstance(trace, np.ndarray) or (len(trace) and not isinstance(trace[0], TraceRecord)):
        e = np.asarray(trace, dtype=np.float64)
        t = np.arange(len(e), dtype=np.float64)
    else:
        e = np.array([rec.e_t for rec in trace])
        t = np.array([rec.t for rec in trace], dtype=np.float64)
    if window is not None:
        lo, hi = window
        mask = (t >= lo) & (t <= hi)
        t, e = t[mask], e[mask]
    if len(t) == 0:
        raise ValueError("empty fit window")

    if model == MODEL_GEOMETRIC:
        bad = np.flatnonzero(e <= 0)
        if bad.size:
            t, e = t[: bad[0]], e[: bad[0]]
        if len(t) < 2:
            raise ValueError("no positive losses to fit in the window")
        y = np.log(e)
    elif model == MODEL_RECIPROCAL:
        if np.any(e == 0):
            raise ValueError("reciprocal fit undefined at zero loss")
        y = 1.0 / e
    else:
        raise ValueError(f"unknown rate model {model!r}")

    slope, intercept = np.polyfit(t, y, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        model=model,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        window=(int(t[0]), int(t[-1])),
    )


@dataclass
class SpeedupRow:
    K: int
    rounds_to_target: Optional[int]
    iterations_to_target: Optional[int]


def speedup_table(
    problem: ProblemInstance,
    base_config: RunConfig,
    K_values: Sequence[int],
    target_loss: float,
) -> list[SpeedupRow]:
    """Rounds (and iterations) until the gap at a communication time first
    drops to the target, for each K under a shared iteration budget T.
    Censored entries (target never reached) carry None."""
    T = base_config.schedule.T
    rows = []
    for K in K_values:
        if T % K != 0:
            raise ValueError(f"K={K} does not divide the iteration budget T={T}")
        config = dataclasses.replace(base_config, schedule=make_schedule(K, T // K))
        result = run_local_sgd(problem, config)
        rounds: Optional[int] = None
        for rec in result.trace:
            if rec.is_comm and rec.e_t <= target_loss:
                rounds = rec.t // K
                break
        rows.append(SpeedupRow(
            K=K,
            rounds_to_target=rounds,
            iterations_to_target=None if rounds is None else rounds * K,
        ))
    return rows


def _require_deterministic(problem: ProblemInstance) -> None:
    if any(loss.sample_count > 1 for loss in problem.losses):
        raise ValueError("per-step checks need deterministic (single-sample) oracles")


def check_lemma1_per_step(problem: ProblemInstance, result: RunResult) -> LemmaReport:
    """Per-node, per-local-step contraction at eta = 1/L on strongly convex
    interpolating problems: the half-step squared distance to the optimum
    shrinks by at least (1 - mu/L)."""
    _require_deterministic(problem)
    if problem.optimum is None:
        raise ValueError("needs a known optimum")
    if abs(result.eta - 1.0 / problem.L) > REL_SLACK / problem.L:
        raise ValueError("contraction lemma requires eta = 1/L")
    states, halves = result.node_states, result.half_states
    if states is None or halves is None:
        raise ValueError("needs record_node_states=True")
    rate = 1.0 - problem.mu / problem.L
    before = np.sum((states[:-1] - problem.optimum) ** 2, axis=2)
    after = np.sum((halves - problem.optimum) ** 2, axis=2)
    viol = after - rate * before
    tol = REL_SLACK * np.maximum(1.0, rate * before)
    worst = float(np.max(viol))
    return LemmaReport(
        name="lemma1_contraction",
        satisfied=bool(np.all(viol <= tol)),
        worst_violation=worst,
        checks=int(viol.size),
    )


def check_lemma1_mean(
    problem: ProblemInstance,
    config: RunConfig,
    seeds: Sequence[int],
    jobs: int = 1,
) -> LemmaReport:
    """Expectation form of the per-step contraction for stochastic oracles:
    across a seed sweep, mean(after - (1-mu/L) * before) <= 3 standard errors
    at every (iteration, node)."""
    if len(seeds) < 2:
        raise ValueError("need at least 2 seeds for a mean check")
    config = dataclasses.replace(config, record_node_states=True)
    results = run_many(problem, config, seeds, jobs=jobs)
    rate = 1.0 - problem.mu / problem.L
    diffs = []
    for res in results:
        before = np.sum((res.node_states[:-1] - problem.optimum) ** 2, axis=2)
        after = np.sum((res.half_states - problem.optimum) ** 2, axis=2)
        diffs.append(after - rate * before)
    diffs = np.stack(diffs)  # (seeds, T, n)
    mean = np.mean(diffs, axis=0)
    se = np.std(diffs, axis=0, ddof=1) / np.sqrt(len(seeds))
    viol = mean - 3.0 * se
    worst = float(np.max(viol))
    return LemmaReport(
        name="lemma1_contraction_mean",
        satisfied=bool(np.all(viol <= REL_SLACK)),
        worst_violation=worst,
        checks=int(mean.size),
        detail=f"seeds={len(seeds)}",
    )


def check_lemma3_per_step(problem: ProblemInstance, result: RunResult) -> LemmaReport:
    """Per-step progress at eta = 1/(2L) on convex interpolating problems:
    each local step closes at least (1/2L) of that node's own gap."""
    _require_deterministic(problem)
    if problem.optimum is None:
        raise ValueError("needs a known optimum")
    expected = 1.0 / (2.0 * problem.L)
    if abs(result.eta - expected) > REL_SLACK * expected:
        raise ValueError("progress lemma requires eta = 1/(2L)")
    states, halves = result.node_states, result.half_states
    if states is None or halves is None:
        raise ValueError("needs record_node_states=True")
    x_star = problem.optimum
    T, n = halves.shape[0], halves.shape[1]
    worst = -np.inf
    ok = True
    for t in range(T):
        for i in range(n):
            loss = problem.losses[i]
            before = float(np.sum((states[t, i] - x_star) ** 2))
            after = float(np.sum((halves[t, i] - x_star) ** 2))
            gap_i = loss.value(states[t, i]) - loss.value(x_star)
            rhs = before - expected * gap_i
            viol = after - rhs
            worst = max(worst, viol)
            if viol > REL_SLACK * max(1.0, abs(rhs)):
                ok = False
    return LemmaReport(
        name="lemma3_progress",
        satisfied=ok,
        worst_violation=worst,
        checks=T * n,
    )


def check_descent_lemma(problem: ProblemInstance, result: RunResult, rho: float) -> LemmaReport:
    """One-step descent of the averaged iterate under the growth condition at
    eta = 1/(3KL rho): e_{t+1} <= e_t - (eta/3) h_t + (2 eta/3) L^2 V_t."""
    K = result.config.schedule.K
    expected = 1.0 / (3.0 * K * problem.L * rho)
    if abs(result.eta - expected) > 1e-9 * expected:
        raise ValueError("descent lemma requires eta = 1/(3KL*rho)")
    trace = result.trace
    ts = [rec.t for rec in trace]
    if ts != list(range(len(ts))):
        raise ValueError("descent lemma needs an every-iteration trace")
    eta, L = result.eta, problem.L
    worst = -np.inf
    ok = True
    for rec, nxt in zip(trace, trace[1:]):
        rhs = rec.e_t - (eta / 3.0) * rec.h_t + (2.0 * eta / 3.0) * L * L * rec.V_t
        viol = nxt.e_t - rhs
        worst = max(worst, viol)
        if viol > REL_SLACK * max(1.0, abs(rhs)):
            ok = False
    return LemmaReport(
        name="descent_step",
        satisfied=ok,
        worst_violation=worst,
        checks=len(trace) - 1,
    )


def check_consensus_lemma(result: RunResult, rho: float) -> LemmaReport:
    """Drift bound between communication times: V_t is at most
    3 eta^2 K rho times the running sum of h over the current round."""
    trace = result.trace
    ts = [rec.t for rec in trace]
    if ts != list(range(len(ts))):
        raise ValueError("consensus lemma needs an every-iteration trace")
    sched = result.config.schedule
    eta = result.eta
    coeff = 3.0 * eta * eta * sched.K * rho
    worst = -np.inf
    ok = True
    h_sum = 0.0
    for rec in trace:
        if sched.is_comm(rec.t):
            h_sum = 0.0
        rhs = coeff * h_sum
        viol = rec.V_t - rhs
        worst = max(worst, viol)
        if viol > REL_SLACK * max(1.0, rhs):
            ok = False
        h_sum += rec.h_t
    return LemmaReport(
        name="consensus_drift",
        satisfied=ok,
        worst_violation=worst,
        checks=len(trace),
    )
