"""Simulation loop: per-node local stochastic gradient steps with exact
parameter averaging at communication times, recording the full metric trace
of the averaged iterate.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    DIVERGENCE_NORM,
    RECORD_COMM,
    RULE_MANUAL,
    RngStream,
    RunConfig,
    StepsizePolicy,
    TraceRecord,
    all_finite,
    make_schedule,
    resolve_stepsize,
)
from .problems import LinSepDataset, ProblemInstance, exact_separator, make_hinge_problem

STATUS_COMPLETED = "completed"
STATUS_DIVERGED = "diverged"


@dataclass
class RunResult:
    """Trace plus final iterates of one simulation run.

    weighted_average is (1/W) sum_{t<T} w_t xbar^(t) with w_t = 1 adjacent
    to communication times and w_t = c elsewhere; weight_c_source records
    where that c came from ("problem", "override", or "default" = 1.0 when
    nothing is known). node_states[t] holds every node's iterate at time t
    and half_states[t] the iterates after the local step at t but before
    any averaging; both are None unless requested.
    """

    trace: list[TraceRecord]
    final_average: np.ndarray
    weighted_average: np.ndarray
    status: str
    eta: float
    weight_c: float
    weight_c_source: str
    config: RunConfig
    diverged_at: Optional[int] = None
    node_states: Optional[np.ndarray] = None
    half_states: Optional[np.ndarray] = None

    @property
    def final_gap(self) -> float:
        return self.trace[-1].e_t

    def metric(self, name: str) -> np.ndarray:
        vals = [getattr(rec, name) for rec in self.trace]
        return np.array([np.nan if v is None else v for v in vals])


def _node_mean(X: np.ndarray) -> np.ndarray:
    # index order, pairwise summation, division last: reproducible bit-for-bit
    return np.mean(X, axis=0)


def _consensus_error(X: np.ndarray, xbar: np.ndarray) -> float:
    if bool((X == X[0]).all()):
        return 0.0  # exact consensus (always right after averaging and at t=0)
    dev = X - xbar
    return float(np.mean(np.sum(dev * dev, axis=1)))


def _step_gradient(loss, x: np.ndarray, rng: RngStream, node: int, t: int, batch: int) -> np.ndarray:
    m = loss.sample_count
    if m == 0:
        return loss.grad(x)
    if m == 1:
        return loss.stoch_grad(x, 0)
    idx = rng.sample_indices(node, t, m, count=batch)
    if batch == 1:
        return loss.stoch_grad(x, int(idx[0]))
    return np.mean(np.stack([loss.stoch_grad(x, int(s)) for s in idx]), axis=0)


def run_local_sgd(problem: ProblemInstance, config: RunConfig) -> RunResult:
    """Run local SGD: T = R*K iterations, averaging every K steps.

    At each t every node draws its sample(s) from the counter-based stream
    keyed by (seed, node, t) and takes one gradient step; when t+1 is a
    communication time all nodes are reset to the exact mean of their
    half-step iterates. The trace records the averaged iterate at every t
    (or only at communication times, per record_granularity); divergence
    halts the run with the trace collected so far.
    """
    sched = config.schedule
    n, d = problem.n_nodes, problem.dimension
    eta = resolve_stepsize(config.stepsize, problem.L, problem.mu, problem.rho, sched.K)

    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=np.float64)
    elif problem.default_x0 is not None:
        x0 = np.asarray(problem.default_x0, dtype=np.float64)
    else:
        x0 = np.zeros(d)
    if x0.shape != (d,):
        raise ValueError(f"x0 has shape {x0.shape}, problem dimension is {d}")

    if config.weight_c is not None:
        c_w, c_source = float(config.weight_c), "override"
    elif problem.c is not None:
        c_w, c_source = float(problem.c), "problem"
    else:
        c_w, c_source = 1.0, "default"

    rng = RngStream(config.seed)
    X = np.tile(x0, (n, 1))
    T = sched.T

    record_states = config.record_node_states
    node_states = np.zeros((T + 1, n, d)) if record_states else None
    half_states = np.zeros((T, n, d)) if record_states else None

    trace: list[TraceRecord] = []
    weight_sum = 0.0
    weighted_acc = np.zeros(d)
    last_avg = x0.copy()
    status = STATUS_COMPLETED
    diverged_at: Optional[int] = None

    def weight_at(t: int) -> float:
        return 1.0 if (sched.is_comm(t) or sched.is_comm(t + 1)) else c_w

    def record(t: int, xbar: np.ndarray) -> None:
        if config.record_granularity == RECORD_COMM and not sched.is_comm(t):
            return
        r_t = None
        if problem.optimum is not None:
            diff = xbar - problem.optimum
            r_t = float(diff @ diff)
        g = problem.objective_grad(xbar)
        trace.append(TraceRecord(
            t=t,
            is_comm=sched.is_comm(t),
            e_t=problem.gap(xbar),
            r_t=r_t,
            h_t=float(g @ g),
            V_t=_consensus_error(X, xbar),
            w_t=weight_at(t),
        ))

    for t in range(T):
        xbar = _node_mean(X)
        last_avg = xbar
        if record_states:
            node_states[t] = X
        record(t, xbar)
        w = weight_at(t)
        weighted_acc += w * xbar
        weight_sum += w

        for i in range(n):
            g = _step_gradient(problem.losses[i], X[i], rng, i, t, config.batch_size)
            X[i] = X[i] - eta * g
        if record_states:
            half_states[t] = X
        if sched.is_comm(t + 1):
            X = np.tile(_node_mean(X), (n, 1))

        if not all_finite(X) or float(np.linalg.norm(_node_mean(X))) > DIVERGENCE_NORM:
            status = STATUS_DIVERGED
            diverged_at = t + 1
            break

    if status == STATUS_COMPLETED:
        xbar = _node_mean(X)
        last_avg = xbar
        if record_states:
            node_states[T] = X
        record(T, xbar)
    elif record_states:
        node_states = node_states[: diverged_at]
        half_states = half_states[: diverged_at]

    weighted = weighted_acc / weight_sum if weight_sum > 0 else last_avg.copy()
    return RunResult(
        trace=trace,
        final_average=last_avg,
        weighted_average=weighted,
        status=status,
        eta=eta,
        weight_c=c_w,
        weight_c_source=c_source,
        config=config,
        diverged_at=diverged_at,
        node_states=node_states,
        half_states=half_states,
    )


def run_minibatch_baseline(problem: ProblemInstance, config: RunConfig) -> RunResult:
    """Synchronous baseline with the same per-round gradient budget: one
    averaged step per round using batches of K samples per node."""
    derived = dataclasses.replace(
        config,
        schedule=make_schedule(1, config.schedule.R),
        batch_size=config.batch_size * config.schedule.K,
    )
    return run_local_sgd(problem, derived)


def _run_with_seed(args: tuple[ProblemInstance, RunConfig, int]) -> RunResult:
    problem, config, seed = args
    return run_local_sgd(problem, dataclasses.replace(config, seed=seed))


def run_many(
    problem: ProblemInstance,
    config: RunConfig,
    seeds: Sequence[int],
    jobs: int = 1,
) -> list[RunResult]:
    """One run per seed, in seed order; parallel workers change nothing but
    wall time (every run's randomness is a pure function of its seed)."""
    tasks = [(problem, config, int(s)) for s in seeds]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_with_seed(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_with_seed, tasks))


def precompute_interpolator(
    dataset: LinSepDataset,
    partition,
    seed: int = 0,
    K: int = 10,
    rounds: int = 300,
    target: float = 1e-10,
) -> np.ndarray:
    """Center for the strongly convex correction: a point with exactly zero
    hinge loss.

    Runs the uncorrected problem for a round budget, then scales the iterate
    so every functional margin clears 1; the scaled point has loss 0 (below
    any target) and zero per-sample gradients. Falls back to the scaled
    generator normal if the budgeted run has not found a separator yet.
    """
    problem = make_hinge_problem(dataset, partition, 0.0, None)
    config = RunConfig(
        schedule=make_schedule(K, rounds),
        stepsize=StepsizePolicy(RULE_MANUAL, eta=1.0 / problem.L),
        seed=seed,
        record_granularity=RECORD_COMM,
    )
    result = run_local_sgd(problem, config)
    w = result.final_average
    margins = dataset.labels * (dataset.points @ w)
    worst = float(np.min(margins))
    if worst <= 0:
        return exact_separator(dataset)
    scaled = w * ((1.0 + 1e-6) / worst)
    if problem.objective_value(scaled) > target:
        return exact_separator(dataset)
    return scaled


def save_trace_csv(trace: Sequence[TraceRecord], path: str) -> None:
    """Schema: t, is_comm, e_t, r_t, h_t, V_t, w_t (r_t empty when the
    problem has no known optimum). Floats are written with repr so the file
    parses back bit-identically."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "is_comm", "e_t", "r_t", "h_t", "V_t", "w_t"])
        for rec in trace:
            writer.writerow([
                rec.t,
                int(rec.is_comm),
                repr(rec.e_t),
                "" if rec.r_t is None else repr(rec.r_t),
                repr(rec.h_t),
                repr(rec.V_t),
                repr(rec.w_t),
            ])


def load_trace_csv(path: str) -> list[TraceRecord]:
    out: list[TraceRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t", "is_comm"]:
            raise ValueError(f"{path} is not a trace CSV")
        for row in reader:
            out.append(TraceRecord(
                t=int(row[0]),
                is_comm=bool(int(row[1])),
                e_t=float(row[2]),
                r_t=None if row[3] == "" else float(row[3]),
                h_t=float(row[4]),
                V_t=float(row[5]),
                w_t=float(row[6]),
            ))
    return out
