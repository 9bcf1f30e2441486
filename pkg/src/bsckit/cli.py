"""Command-line surface: synthesize, verify, simulate, sweep.

Each command writes its delimited outputs (CSV/JSON) into the output directory
and, for the simulation commands, renders report figures alongside them.
Failures emit a machine-readable JSON object on stderr and a nonzero exit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio, plots
from .benchmarks import PHASE_DIMS, STATE_LABELS, BenchmarkDef, builtin_benchmark
from .simkit import (OUTCOME_DEADLINE_MISSED, OUTCOME_SAFETY_VIOLATED,
                     SimConfig, batch_recovery, make_rejection_sampler, simulate)
from .synth import SweepResult, discretize, sweep_periods, verify_certificate

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_MISSED = 3


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _resolve_benchmark(args) -> BenchmarkDef:
    if args.config:
        return fileio.benchmark_from_config(args.config)
    return builtin_benchmark(args.benchmark)


def _labels_for(benchmark: BenchmarkDef):
    n = benchmark.plant.n_states
    return STATE_LABELS.get(benchmark.name, tuple(f"x_{i+1}" for i in range(n)))


def _phase_dims_for(benchmark: BenchmarkDef):
    return PHASE_DIMS.get(benchmark.name, (0, 1))


def _run_sweeps(benchmark: BenchmarkDef, deadlines, args) -> dict[float, SweepResult]:
    alpha_search = "maximize" if args.maximize_alpha else "fixed"
    return {
        deadline: sweep_periods(
            benchmark.plant, benchmark.sor, benchmark.por, deadline,
            benchmark.h0, benchmark.h_max, alpha_search=alpha_search,
            wcets=benchmark.wcet, solver=args.solver)
        for deadline in deadlines
    }


def cmd_synth(args) -> int:
    benchmark = _resolve_benchmark(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    deadlines = (args.deadline,) if args.deadline else tuple(benchmark.deadlines)
    sweeps = _run_sweeps(benchmark, deadlines, args)
    fileio.write_feasibility_table(out / f"{benchmark.name}_feasibility.csv", sweeps)
    selected = args.deadline if args.deadline else max(deadlines)
    result = sweeps[selected]
    for attempt in result.attempts:
        print(f"deadline {selected}s period {attempt.h*1000:.0f}ms: {attempt.status}"
              + (f" (alpha={attempt.alpha:.4f})" if attempt.alpha else ""))
    if not result.controllers:
        _emit_error("SynthesisInfeasible",
                    result.advice or "no feasible period")
        return EXIT_FAIL
    set_path = out / f"{benchmark.name}_controllers_{selected}.json"
    fileio.write_controller_set(set_path, result.controllers, benchmark.name)
    print(f"wrote {len(result.controllers)} controllers to {set_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    benchmark = _resolve_benchmark(args)
    controllers = fileio.read_controller_set(args.controllers)
    failed = 0
    for bsc in controllers:
        loop = discretize(benchmark.plant, bsc.h)
        report = verify_certificate(bsc, loop, benchmark.sor)
        status = "PASS" if report.passed else "FAIL"
        print(f"period {bsc.h*1000:.0f}ms: {status} "
              f"(decay residual {report.decay_residual:.3e}, "
              f"level margin {report.level_margin:.3e}, "
              f"rho {report.spectral_radius:.6f})")
        if not report.passed:
            failed += 1
    if failed:
        _emit_error("CertificateFailure",
                    f"{failed} of {len(controllers)} certificates failed")
        return EXIT_FAIL
    return EXIT_OK


def _obtain_controllers(benchmark: BenchmarkDef, deadline: float, args):
    if args.controllers:
        return fileio.read_controller_set(args.controllers)
    result = _run_sweeps(benchmark, (deadline,), args)[deadline]
    if not result.controllers:
        raise RuntimeError(result.advice or "no feasible period")
    return result.controllers


def _parse_x0(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")], dtype=float)


def _sim_config(benchmark: BenchmarkDef, deadline: float, args,
                x0: np.ndarray) -> SimConfig:
    t_end = args.t_end if args.t_end else deadline
    return SimConfig(t_end=t_end, fine_step=benchmark.h0 / 20.0,
                     noise_on=args.noise, seed=args.seed,
                     observer_on=args.observer, x0=x0, deadline=deadline)


def cmd_simulate(args) -> int:
    benchmark = _resolve_benchmark(args)
    deadline = args.deadline if args.deadline else max(benchmark.deadlines)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    controllers = _obtain_controllers(benchmark, deadline, args)
    ctx = benchmark.poc_context()
    if args.x0:
        x0 = _parse_x0(args.x0)
    else:
        sampler = make_rejection_sampler(benchmark.sor, benchmark.por, controllers)
        x0 = sampler(np.random.default_rng(args.seed))
    config = _sim_config(benchmark, deadline, args, x0)
    trace = simulate(benchmark.plant, controllers, ctx, config)

    stem = fileio.run_stem(benchmark.name, args.scenario, args.seed)
    fileio.write_trace_csv(out / f"{stem}.csv", trace)
    fileio.write_trace_summary(out / f"{stem}_summary.json", trace,
                               extra={"deadline_s": deadline,
                                      "x0": list(map(float, x0))})
    if not args.no_figures:
        labels = _labels_for(benchmark)
        plots.trace_figure(out / f"{stem}_states.png", trace, labels,
                           title=f"{benchmark.name}: closed-loop run")
        if benchmark.plant.n_states >= 2:
            plots.phase_figure(out / f"{stem}_phase.png", [trace], controllers,
                               benchmark.sor, benchmark.por,
                               _phase_dims_for(benchmark), labels,
                               title=f"{benchmark.name}: phase view")
        plots.activation_figure(out / f"{stem}_activation.png", trace,
                                title=f"{benchmark.name}: activation")
    outcome = trace.outcome
    print(f"outcome: {outcome.kind}"
          + (f" at t={outcome.time:.3f}s" if outcome.time is not None else ""))
    print(f"switches: {len(trace.switch_events)}, "
          f"notify: {bool(trace.notify.any())}")
    if outcome.kind == OUTCOME_SAFETY_VIOLATED:
        _emit_error("SafetyViolation", f"safe region exited at t={outcome.time}")
        return EXIT_FAIL
    if outcome.kind == OUTCOME_DEADLINE_MISSED:
        _emit_error("DeadlineMissed", f"no recovery within {deadline}s")
        return EXIT_MISSED
    return EXIT_OK


def cmd_sweep(args) -> int:
    benchmark = _resolve_benchmark(args)
    deadline = args.deadline if args.deadline else max(benchmark.deadlines)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    controllers = _obtain_controllers(benchmark, deadline, args)
    ctx = benchmark.poc_context()
    sampler = make_rejection_sampler(benchmark.sor, benchmark.por, controllers)
    config = _sim_config(benchmark, deadline, args,
                         x0=np.zeros(benchmark.plant.n_states))
    kept: list = []

    def keep_some(i, trace):
        if i < args.keep_traces:
            kept.append(trace)

    summary = batch_recovery(benchmark.plant, controllers, ctx, args.runs,
                             sampler, config, on_trace=keep_some)
    stem = fileio.run_stem(benchmark.name, args.scenario, args.seed)
    fileio.write_batch_summary(out / f"{stem}_batch.json", summary,
                               extra={"deadline_s": deadline})
    with open(out / f"{stem}_outcomes.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "outcome", "time"]
                        + [f"x0_{i+1}" for i in range(benchmark.plant.n_states)])
        for i, (outcome, x0) in enumerate(zip(summary.outcomes,
                                              summary.initial_states)):
            writer.writerow([i, outcome.kind,
                             outcome.time if outcome.time is not None else ""]
                            + [repr(float(v)) for v in x0])
    if not args.no_figures and kept and benchmark.plant.n_states >= 2:
        labels = _labels_for(benchmark)
        plots.phase_figure(out / f"{stem}_phase.png", kept, controllers,
                           benchmark.sor, benchmark.por,
                           _phase_dims_for(benchmark), labels,
                           title=f"{benchmark.name}: batch recovery")
    print(f"runs: {summary.n_runs}, recovery rate: {summary.recovery_rate:.3f}, "
          f"max recovery time: {summary.max_recovery_time:.3f}s, "
          f"violations: {summary.violations_count}")
    if summary.violations_count:
        _emit_error("SafetyViolation",
                    f"{summary.violations_count} runs exited the safe region")
        return EXIT_FAIL
    if summary.recovery_rate < 1.0:
        _emit_error("DeadlineMissed",
                    f"recovery rate {summary.recovery_rate:.3f} < 1")
        return EXIT_MISSED
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, needs_controllers=False) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--benchmark", choices=("ald", "ipd"),
                       help="built-in benchmark name")
    group.add_argument("--config", help="path to a run-configuration JSON")
    parser.add_argument("--deadline", type=float, default=None,
                        help="recovery deadline in seconds")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--maximize-alpha", action="store_true",
                        help="bisect the decay upward instead of fixing it at "
                             "the minimum required value")
    parser.add_argument("--solver", default=None,
                        help="conic solver name (default: best installed)")
    if needs_controllers:
        parser.add_argument("--controllers", default=None,
                            help="controller-set JSON (default: synthesize)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsckit",
        description="Backup safe controller synthesis and resource-aware "
                    "closed-loop simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize multi-rate backups")
    _add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_verify = sub.add_parser("verify", help="re-check a controller-set file")
    p_verify.add_argument("controllers", help="controller-set JSON path")
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    _add_common(p_sim, needs_controllers=True)
    p_sim.add_argument("--x0", default=None,
                       help="initial state as comma-separated values "
                            "(default: seeded admissible sample)")
    p_sim.add_argument("--observer", action="store_true",
                       help="close the loop through the state estimator")
    p_sim.add_argument("--noise", action="store_true",
                       help="enable process and measurement noise")
    p_sim.add_argument("--t-end", type=float, default=None,
                       help="simulation horizon (default: the deadline)")
    p_sim.add_argument("--scenario", default="run", help="output name label")
    p_sim.add_argument("--no-figures", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="batch recovery study")
    _add_common(p_sweep, needs_controllers=True)
    p_sweep.add_argument("--runs", type=int, default=50)
    p_sweep.add_argument("--observer", action="store_true")
    p_sweep.add_argument("--noise", action="store_true")
    p_sweep.add_argument("--t-end", type=float, default=None)
    p_sweep.add_argument("--scenario", default="batch")
    p_sweep.add_argument("--keep-traces", type=int, default=12,
                         help="traces retained for the phase figure")
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface every failure as machine-readable JSON
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
