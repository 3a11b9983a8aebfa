"""Config-driven experiment runner.

Experiment files are TOML: a [problem] table picks one of the built-in
problem kinds, [run] sets the schedule and stepsize, optional [partition],
[sweep] and [verify] tables drive the hinge sharding, multi-run sweeps and
bound verification. Every key has a documented default and unknown keys are
rejected outright so typos cannot silently change an experiment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import analysis, engine, partition, problems
from .core import (
    RECORD_COMM,
    RECORD_EVERY,
    RULE_CONVEX,
    RULE_MANUAL,
    RULE_NONCONVEX,
    RULE_STRONGLY_CONVEX,
    RngStream,
    RunConfig,
    StepsizePolicy,
    make_schedule,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    """Bad experiment file: unknown key, missing field, or invalid value."""


_PROBLEM_KINDS = ("quadratic", "hinge", "prop1", "prop2")
_TOP_KEYS = {"name", "outputs", "problem", "partition", "run", "sweep", "verify"}
_PROBLEM_KEYS = {
    "quadratic": {"kind", "curvatures", "x_star", "dim", "sample_spread"},
    "hinge": {"kind", "N", "d", "margin", "dataset_seed", "mu_correction"},
    "prop1": {"kind", "L"},
    "prop2": {"kind", "L"},
}
_PARTITION_KEYS = {"regime", "n"}
_RUN_KEYS = {"K", "R", "seed", "stepsize", "eta", "record", "batch_size", "x0",
             "divergence_is_failure"}
_SWEEP_KEYS = {"K", "seeds", "target_loss"}
_VERIFY_KEYS = {"checks"}
_CHECK_NAMES = ("T1", "T2", "T3", "P1", "P2", "lemmas", "interpolation", "sgc")


@dataclass
class ExperimentSpec:
    name: str
    outputs: str
    problem: dict
    partition: dict
    run: dict
    sweep: Optional[dict]
    verify: dict
    raw_text: str


def _check_keys(table: dict, allowed: set, where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{where}]")


def _positive_int(table: dict, key: str, default: int, where: str) -> int:
    val = table.get(key, default)
    if not isinstance(val, int) or isinstance(val, bool) or val < 1:
        raise ConfigError(f"{where}.{key} must be a positive integer, got {val!r}")
    return val


def load_spec(path: str) -> ExperimentSpec:
    text = Path(path).read_text()
    return parse_spec(text)


def parse_spec(text: str) -> ExperimentSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"spec file is not valid TOML: {exc}") from exc
    _check_keys(data, _TOP_KEYS, "top level")

    prob = dict(data.get("problem", {"kind": None}))
    kind = prob.get("kind")
    if kind is not None or "problem" in data:
        if kind not in _PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {_PROBLEM_KINDS}, got {kind!r}")
        _check_keys(prob, _PROBLEM_KEYS[kind], "problem")
    if kind == "quadratic" and "curvatures" not in prob:
        raise ConfigError("problem.curvatures is required for quadratic problems")
    if kind == "hinge":
        prob.setdefault("N", 1000)
        prob.setdefault("d", 20)
        prob.setdefault("margin", 0.0)
        prob.setdefault("dataset_seed", 0)
        prob.setdefault("mu_correction", 0.0)
    if kind in ("prop1", "prop2"):
        prob.setdefault("L", 1.0)

    part = dict(data.get("partition", {}))
    _check_keys(part, _PARTITION_KEYS, "partition")
    part.setdefault("regime", partition.REGIME_EVEN)
    part.setdefault("n", 8)
    if part["regime"] not in (partition.REGIME_EVEN, partition.REGIME_PATHOLOGICAL,
                              partition.REGIME_WORST_CASE):
        raise ConfigError(f"partition.regime must be even|pathological|worst_case, "
                          f"got {part['regime']!r}")

    run = dict(data.get("run", {}))
    _check_keys(run, _RUN_KEYS, "run")
    run["K"] = _positive_int(run, "K", 1, "run")
    run["R"] = _positive_int(run, "R", 1, "run")
    run["batch_size"] = _positive_int(run, "batch_size", 1, "run")
    run.setdefault("seed", 0)
    run.setdefault("record", RECORD_EVERY)
    run.setdefault("divergence_is_failure", False)
    if run["record"] not in (RECORD_EVERY, RECORD_COMM):
        raise ConfigError(f"run.record must be every|comm, got {run['record']!r}")
    if "stepsize" in run and run["stepsize"] not in (
            RULE_STRONGLY_CONVEX, RULE_CONVEX, RULE_NONCONVEX, RULE_MANUAL):
        raise ConfigError(f"run.stepsize must be a known rule, got {run['stepsize']!r}")

    sweep = data.get("sweep")
    if sweep is not None:
        sweep = dict(sweep)
        _check_keys(sweep, _SWEEP_KEYS, "sweep")
        sweep.setdefault("target_loss", 1e-2)

    verify = dict(data.get("verify", {}))
    _check_keys(verify, _VERIFY_KEYS, "verify")
    verify.setdefault("checks", [])
    for name in verify["checks"]:
        if name not in _CHECK_NAMES:
            raise ConfigError(f"verify.checks entry {name!r} is not one of {_CHECK_NAMES}")

    return ExperimentSpec(
        name=data.get("name", "experiment"),
        outputs=data.get("outputs", "out"),
        problem=prob,
        partition=part,
        run=run,
        sweep=sweep,
        verify=verify,
        raw_text=text,
    )


def _default_policy(spec: ExperimentSpec, problem: problems.ProblemInstance) -> StepsizePolicy:
    kind = spec.problem["kind"]
    K = spec.run["K"]
    if kind == "prop1":
        return StepsizePolicy(RULE_MANUAL, eta=1.0 / problem.L)
    if kind == "prop2":
        return StepsizePolicy(RULE_MANUAL, eta=2.0 / (problem.L * K))
    return StepsizePolicy(RULE_CONVEX)


def _build_policy(spec: ExperimentSpec, problem: problems.ProblemInstance) -> StepsizePolicy:
    run = spec.run
    if "stepsize" not in run:
        return _default_policy(spec, problem)
    rule = run["stepsize"]
    if rule == RULE_MANUAL:
        if "eta" not in run:
            raise ConfigError("run.eta is required when run.stepsize = 'manual'")
        return StepsizePolicy(RULE_MANUAL, eta=float(run["eta"]))
    return StepsizePolicy(rule)


def build_problem(spec: ExperimentSpec, seed_override: Optional[int] = None):
    """Instantiate the problem and run configuration an experiment file
    describes; returns (problem, config, resolved-constants dict)."""
    prob = spec.problem
    kind = prob["kind"]
    if kind is None:
        raise ConfigError("a [problem] table with a kind is required for this command")
    K, R = spec.run["K"], spec.run["R"]

    if kind == "quadratic":
        curvatures = [float(v) for v in prob["curvatures"]]
        x_star_raw = prob.get("x_star", 0.0)
        if isinstance(x_star_raw, (int, float)):
            dim = int(prob.get("dim", 1))
            x_star = np.full(dim, float(x_star_raw))
        else:
            x_star = np.array([float(v) for v in x_star_raw])
            if "dim" in prob and int(prob["dim"]) != x_star.shape[0]:
                raise ConfigError("problem.dim contradicts the length of problem.x_star")
        instance = problems.make_shared_optimum_quadratic(
            curvatures, x_star, sample_spread=float(prob.get("sample_spread", 0.0)))
    elif kind == "hinge":
        dataset = problems.make_linsep_dataset(
            int(prob["N"]), int(prob["d"]), float(prob["margin"]),
            RngStream(int(prob["dataset_seed"])))
        regime = spec.partition["regime"]
        n = int(spec.partition["n"])
        if regime == partition.REGIME_EVEN:
            assignment = partition.partition_even(dataset.N, n, RngStream(int(prob["dataset_seed"])))
        elif regime == partition.REGIME_PATHOLOGICAL:
            assignment = partition.partition_pathological(dataset, n)
        else:
            assignment = partition.partition_worst_case(dataset.N, n)
        mu_corr = float(prob["mu_correction"])
        center = None
        if mu_corr > 0:
            center = engine.precompute_interpolator(
                dataset, assignment, seed=int(prob["dataset_seed"]))
        instance = problems.make_hinge_problem(dataset, assignment, mu_corr, center)
    elif kind == "prop1":
        instance, _ = problems.make_prop1_instance(float(prob["L"]), K, R)
    else:
        instance = problems.make_prop2_instance(float(prob["L"]))

    seed = int(seed_override if seed_override is not None else spec.run["seed"])
    x0 = None
    if "x0" in spec.run:
        raw = spec.run["x0"]
        x0 = (np.full(instance.dimension, float(raw))
              if isinstance(raw, (int, float))
              else np.array([float(v) for v in raw]))
    config = RunConfig(
        schedule=make_schedule(K, R),
        stepsize=_build_policy(spec, instance),
        seed=seed,
        record_granularity=spec.run["record"],
        batch_size=spec.run["batch_size"],
        x0=x0,
    )
    from .core import resolve_stepsize
    eta = resolve_stepsize(config.stepsize, instance.L, instance.mu, instance.rho, K)
    resolved = {
        "kind": kind,
        "n": instance.n_nodes,
        "d": instance.dimension,
        "K": K,
        "R": R,
        "T": K * R,
        "L": instance.L,
        "mu": instance.mu,
        "rho": instance.rho,
        "c": instance.c,
        "eta": eta,
    }
    return instance, config, resolved


def _write_manifest(outdir: Path, spec: ExperimentSpec, resolved: dict,
                    seeds: list[int], traces: list[str], statuses: list[str]) -> None:
    manifest = {
        "name": spec.name,
        "spec_text": spec.raw_text,
        "resolved": resolved,
        "seeds": seeds,
        "traces": traces,
        "statuses": statuses,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    problem, config, resolved = build_problem(spec, args.seed)
    outdir = Path(args.out if args.out else spec.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    result = engine.run_local_sgd(problem, config)
    trace_path = outdir / "trace.csv"
    engine.save_trace_csv(result.trace, str(trace_path))
    _write_manifest(outdir, spec, resolved, [config.seed], [trace_path.name], [result.status])
    print(f"{spec.name}: status={result.status} final_gap={result.final_gap:.6g} "
          f"rows={len(result.trace)} -> {trace_path}")
    if result.status == engine.STATUS_DIVERGED and spec.run["divergence_is_failure"]:
        return EXIT_DIVERGED
    return EXIT_OK


def _sweep_task(payload):
    problem, config = payload
    return engine.run_local_sgd(problem, config)


def _mean_trace_rows(results) -> list[list]:
    rows = []
    n_rec = len(results[0].trace)
    for idx in range(n_rec):
        recs = [res.trace[idx] for res in results]
        r_vals = [rec.r_t for rec in recs]
        r_mean = "" if any(v is None for v in r_vals) else repr(float(np.mean(r_vals)))
        rows.append([
            recs[0].t,
            int(recs[0].is_comm),
            repr(float(np.mean([rec.e_t for rec in recs]))),
            r_mean,
            repr(float(np.mean([rec.h_t for rec in recs]))),
            repr(float(np.mean([rec.V_t for rec in recs]))),
            repr(float(np.mean([rec.w_t for rec in recs]))),
        ])
    return rows


def cmd_sweep(args) -> int:
    import csv as _csv

    spec = load_spec(args.spec)
    if spec.sweep is None:
        raise ConfigError("sweep command needs a [sweep] table")
    problem, base_config, resolved = build_problem(spec, args.seed)
    T = base_config.schedule.T
    K_values = [int(k) for k in spec.sweep.get("K", [base_config.schedule.K])]
    seeds = [int(s) for s in spec.sweep.get("seeds", [base_config.seed])]
    for K in K_values:
        if T % K != 0:
            raise ConfigError(f"sweep K={K} does not divide the iteration budget T={T}")

    outdir = Path(args.out if args.out else spec.outputs)
    outdir.mkdir(parents=True, exist_ok=True)

    tasks = []
    labels = []
    for K in K_values:
        for seed in seeds:
            cfg = dataclasses.replace(
                base_config, schedule=make_schedule(K, T // K), seed=seed)
            tasks.append((problem, cfg))
            labels.append((K, seed))
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]

    traces = []
    statuses = []
    by_K: dict[int, list] = {K: [] for K in K_values}
    for (K, seed), result in zip(labels, results):
        name = f"run_K{K}_seed{seed}.csv"
        engine.save_trace_csv(result.trace, str(outdir / name))
        traces.append(name)
        statuses.append(result.status)
        by_K[K].append(result)

    for K, group in by_K.items():
        if any(res.status != engine.STATUS_COMPLETED for res in group):
            continue  # means of diverged groups are meaningless
        with open(outdir / f"mean_K{K}.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["t", "is_comm", "e_t", "r_t", "h_t", "V_t", "w_t"])
            writer.writerows(_mean_trace_rows(group))

    target = float(spec.sweep["target_loss"])
    table = analysis.speedup_table(
        problem, dataclasses.replace(base_config, seed=seeds[0]), K_values, target)
    with open(outdir / "speedup.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["K", "rounds_to_target", "iterations_to_target"])
        for row in table:
            writer.writerow([
                row.K,
                "" if row.rounds_to_target is None else row.rounds_to_target,
                "" if row.iterations_to_target is None else row.iterations_to_target,
            ])

    _write_manifest(outdir, spec, resolved, seeds, traces, statuses)
    print(f"{spec.name}: {len(tasks)} runs -> {outdir} "
          f"(K={K_values}, seeds={seeds}, target={target:g})")
    if spec.run["divergence_is_failure"] and any(
            s == engine.STATUS_DIVERGED for s in statuses):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_dataset(args) -> int:
    spec = load_spec(args.spec)
    if spec.problem["kind"] != "hinge":
        raise ConfigError("dataset command needs problem.kind = 'hinge'")
    prob = spec.problem
    seed = int(args.seed if args.seed is not None else prob["dataset_seed"])
    dataset = problems.make_linsep_dataset(
        int(prob["N"]), int(prob["d"]), float(prob["margin"]), RngStream(seed))
    outdir = Path(args.out if args.out else spec.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "dataset.csv"
    problems.save_dataset_csv(dataset, str(path))
    regime = spec.partition["regime"]
    n = int(spec.partition["n"])
    if regime == partition.REGIME_EVEN:
        assignment = partition.partition_even(dataset.N, n, RngStream(seed))
    elif regime == partition.REGIME_PATHOLOGICAL:
        assignment = partition.partition_pathological(dataset, n)
    else:
        assignment = partition.partition_worst_case(dataset.N, n)
    partition.save_partition_csv(assignment, str(outdir / "partition.csv"))
    print(f"{spec.name}: N={dataset.N} d={dataset.d} min_margin={dataset.min_margin():.4g} "
          f"-> {path}")
    return EXIT_OK


def _probe_grid(problem: problems.ProblemInstance) -> list[np.ndarray]:
    base = problem.default_x0
    if base is None or not np.any(base):
        base = np.ones(problem.dimension)
    anchor = problem.optimum if problem.optimum is not None else np.zeros(problem.dimension)
    return [anchor + s * base for s in np.linspace(0.1, 2.0, 20)]


def _verify_spec_checks(spec: ExperimentSpec, seed_override: Optional[int]) -> list:
    """Run the named checks against the experiment file's own problem."""
    reports = []
    problem, config, _ = build_problem(spec, seed_override)
    K, R = config.schedule.K, config.schedule.R
    for name in spec.verify["checks"]:
        if name == "T1":
            result = engine.run_local_sgd(problem, config)
            reports.append(analysis.check_theorem1(result, problem.L, problem.mu))
        elif name == "T2":
            result = engine.run_local_sgd(problem, config)
            reports.append(analysis.check_theorem2(problem, result))
        elif name == "T3":
            rho = problems.rho_estimate(problem, _probe_grid(problem))
            tuned = dataclasses.replace(problem, rho=rho)
            cfg = dataclasses.replace(config, stepsize=StepsizePolicy(RULE_NONCONVEX))
            result = engine.run_local_sgd(tuned, cfg)
            reports.append(analysis.check_theorem3(result, problem.L, rho))
        elif name == "P1":
            if spec.problem["kind"] != "prop1":
                raise ConfigError("P1 check needs problem.kind = 'prop1'")
            cfg = dataclasses.replace(config, record_node_states=True)
            result = engine.run_local_sgd(problem, cfg)
            reports.append(analysis.certify_prop1(result, problem.L, K, K * R))
        elif name == "P2":
            if spec.problem["kind"] != "prop2":
                raise ConfigError("P2 check needs problem.kind = 'prop2'")
            cfg = dataclasses.replace(config, record_node_states=True)
            result = engine.run_local_sgd(problem, cfg)
            reports.append(analysis.certify_prop2(result, problem.L, K))
        elif name == "lemmas":
            reports.extend(_lemma_battery())
        elif name == "interpolation":
            if problem.optimum is None:
                raise ConfigError("interpolation check needs a problem with a known optimum")
            rep = problems.verify_interpolation(problem)
            reports.append(_interp_as_report(rep))
        elif name == "sgc":
            rho = problems.rho_estimate(problem, _probe_grid(problem))
            reports.append(analysis.LemmaReport(
                name="sgc_estimate",
                satisfied=rho >= 1.0,
                worst_violation=0.0 if rho >= 1.0 else 1.0 - rho,
                checks=20,
                detail=f"measured_rho={rho:.4g}",
            ))
    return reports


def _interp_as_report(rep: problems.InterpolationReport) -> analysis.LemmaReport:
    return analysis.LemmaReport(
        name="interpolation",
        satisfied=rep.passed,
        worst_violation=rep.worst,
        checks=len(rep.per_node_max),
        detail=f"tol={rep.tol:g}",
    )


def _lemma_battery() -> list:
    """Conforming-instance battery for the per-step inequalities."""
    reports = []
    quad = problems.make_shared_optimum_quadratic([1.0, 3.0], np.zeros(3))
    sched = make_schedule(4, 8)
    x0 = np.ones(3)

    cfg = RunConfig(schedule=sched, stepsize=StepsizePolicy(RULE_STRONGLY_CONVEX),
                    x0=x0, record_node_states=True)
    reports.append(analysis.check_lemma1_per_step(quad, engine.run_local_sgd(quad, cfg)))

    cfg = dataclasses.replace(cfg, stepsize=StepsizePolicy(RULE_CONVEX))
    reports.append(analysis.check_lemma3_per_step(quad, engine.run_local_sgd(quad, cfg)))

    noisy = problems.make_shared_optimum_quadratic([2.0, 2.0], np.zeros(2), sample_spread=1.0)
    mean_cfg = RunConfig(schedule=make_schedule(4, 4),
                         stepsize=StepsizePolicy(RULE_STRONGLY_CONVEX), x0=np.ones(2))
    reports.append(analysis.check_lemma1_mean(noisy, mean_cfg, seeds=range(200)))

    prop2 = problems.make_prop2_instance(1.0)
    rho = problems.rho_estimate(prop2, _probe_grid(prop2))
    tuned = dataclasses.replace(prop2, rho=rho)
    cfg = RunConfig(schedule=make_schedule(5, 40), stepsize=StepsizePolicy(RULE_NONCONVEX))
    result = engine.run_local_sgd(tuned, cfg)
    reports.append(analysis.check_descent_lemma(tuned, result, rho))
    reports.append(analysis.check_consensus_lemma(result, rho))
    return reports


def _default_verify_suite() -> list:
    """Built-in conforming instances covering every bound and certificate."""
    reports = []

    quad = problems.make_shared_optimum_quadratic([1.0, 3.0], np.zeros(3))
    cfg = RunConfig(schedule=make_schedule(5, 10),
                    stepsize=StepsizePolicy(RULE_STRONGLY_CONVEX), x0=np.ones(3))
    reports.append(analysis.check_theorem1(engine.run_local_sgd(quad, cfg), quad.L, quad.mu))

    for curvatures in ([1.0, 1.0, 1.0, 1.0], [1.0, 3.0]):
        q = problems.make_shared_optimum_quadratic(curvatures, np.zeros(2) if len(curvatures) == 2 else np.zeros(4))
        c2 = RunConfig(schedule=make_schedule(4, 8), stepsize=StepsizePolicy(RULE_CONVEX),
                       x0=np.ones(q.dimension))
        reports.append(analysis.check_theorem2(q, engine.run_local_sgd(q, c2)))

    prop2 = problems.make_prop2_instance(1.0)
    rho = problems.rho_estimate(prop2, _probe_grid(prop2))
    tuned = dataclasses.replace(prop2, rho=rho)
    c3 = RunConfig(schedule=make_schedule(5, 200), stepsize=StepsizePolicy(RULE_NONCONVEX))
    reports.append(analysis.check_theorem3(engine.run_local_sgd(tuned, c3), prop2.L, rho))

    p1_problem, p1_cfg = problems.make_prop1_instance(1.0, 4, 2)
    reports.append(analysis.certify_prop1(
        engine.run_local_sgd(p1_problem, p1_cfg), 1.0, 4, 8))

    p2_cfg = RunConfig(schedule=make_schedule(4, 10),
                       stepsize=StepsizePolicy(RULE_MANUAL, eta=0.5),
                       record_node_states=True)
    reports.append(analysis.certify_prop2(
        engine.run_local_sgd(prop2, p2_cfg), 1.0, 4))

    reports.extend(_lemma_battery())

    reports.append(_interp_as_report(problems.verify_interpolation(quad)))
    rng = RngStream(3)
    dataset = problems.make_linsep_dataset(60, 5, 0.1, rng)
    shards = partition.partition_even(60, 4, rng)
    hinge = problems.make_hinge_problem(dataset, shards, 0.0,
                                        center=problems.exact_separator(dataset))
    reports.append(_interp_as_report(problems.verify_interpolation(hinge)))

    reports.append(analysis.LemmaReport(
        name="sgc_estimate", satisfied=rho >= 1.0,
        worst_violation=0.0, checks=20, detail=f"measured_rho={rho:.4g}"))
    return reports


def cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    if spec.verify["checks"]:
        reports = _verify_spec_checks(spec, args.seed)
    else:
        reports = _default_verify_suite()
    outdir = Path(args.out if args.out else spec.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [rep.line() for rep in reports]
    (outdir / "verify_report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    hard_failures = [
        rep for rep in reports
        if not rep.satisfied and not getattr(rep, "advisory", False)
    ]
    return EXIT_VERIFY_FAILED if hard_failures else EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="localsgd",
        description="Local SGD simulator: run experiments, sweep local-step counts, "
                    "verify convergence bounds, export datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, blurb in (
        ("run", cmd_run, "execute one experiment and write its trace"),
        ("verify", cmd_verify, "run bound/certificate checks"),
        ("sweep", cmd_sweep, "run a (K, seed) sweep with mean traces and speedup table"),
        ("dataset", cmd_dataset, "generate and export a separable dataset"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--spec", required=True, help="experiment TOML file")
        p.add_argument("--out", default=None, help="output directory (default: spec outputs)")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
