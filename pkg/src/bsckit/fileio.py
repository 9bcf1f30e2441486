"""File formats: controller sets (JSON), run configs (JSON), traces (CSV),
summaries (JSON), and feasibility tables (CSV)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .benchmarks import DEFAULT_WCET, BenchmarkDef
from .scap import POC_ID, UtilizationBudget
from .simkit import BatchSummary, SimTrace
from .sysmodel import LinearPlant, Polytope
from .synth import BackupController, SweepResult

CONTROLLER_SET_VERSION = 1


def _matrix(rows) -> np.ndarray:
    return np.asarray(rows, dtype=float)


def controller_set_to_dict(controllers, benchmark: str | None = None) -> dict:
    """Serialize controllers with a deterministic field order so files diff
    cleanly: per controller {h, K row-major, P row-major, c, alpha, wcet}."""
    return {
        "version": CONTROLLER_SET_VERSION,
        "benchmark": benchmark,
        "controllers": [
            {
                "h": bsc.h,
                "K": [list(row) for row in bsc.gain],
                "P": [list(row) for row in bsc.qlf],
                "c": bsc.level,
                "alpha": bsc.alpha,
                "wcet": bsc.wcet,
            }
            for bsc in sorted(controllers, key=lambda b: b.h)
        ],
    }


def write_controller_set(path, controllers, benchmark: str | None = None) -> None:
    Path(path).write_text(
        json.dumps(controller_set_to_dict(controllers, benchmark), indent=2)
        + "\n")


def read_controller_set(path) -> list[BackupController]:
    data = json.loads(Path(path).read_text())
    if data.get("version") != CONTROLLER_SET_VERSION:
        raise ValueError(f"unsupported controller-set version {data.get('version')!r}")
    return [
        BackupController(gain=_matrix(entry["K"]), qlf=_matrix(entry["P"]),
                         level=float(entry["c"]), alpha=float(entry["alpha"]),
                         h=float(entry["h"]), wcet=float(entry["wcet"]))
        for entry in data["controllers"]
    ]


def _polytope_from_config(spec: dict) -> Polytope:
    if "lo" in spec and "hi" in spec:
        return Polytope.box(spec["lo"], spec["hi"],
                            center=spec.get("center"))
    if "A" in spec and "b" in spec:
        center = spec.get("center")
        a_mat = _matrix(spec["A"])
        if center is None:
            center = np.zeros(a_mat.shape[1])
        return Polytope(a_mat, np.asarray(spec["b"], dtype=float),
                        np.asarray(center, dtype=float))
    raise ValueError("region spec needs either {lo, hi} or {A, b}")


def parse_config(data: dict) -> dict:
    """Parse a run configuration document.

    Schema (matrices as row-major nested arrays):
      {plant: {phi, gamma, c, q_w?, r_v?, x_ref?, u_ref?},
       sor: {lo, hi} | {A, b}, por: {...},
       periods: {h0, h_max}, deadline_s,
       budget: [{t, u}, ...], wcets: {default?, "<period_s>"?: wcet},
       poc_period_s?}
    """
    plant_spec = data["plant"]
    plant = LinearPlant.from_matrices(
        _matrix(plant_spec["phi"]), _matrix(plant_spec["gamma"]),
        c_out=_matrix(plant_spec["c"]) if "c" in plant_spec else None,
        q_w=_matrix(plant_spec["q_w"]) if "q_w" in plant_spec else None,
        r_v=_matrix(plant_spec["r_v"]) if "r_v" in plant_spec else None,
        x_ref=plant_spec.get("x_ref"), u_ref=plant_spec.get("u_ref"))
    sor = _polytope_from_config(data["sor"])
    por = _polytope_from_config(data["por"])
    periods = data["periods"]
    budget_spec = data.get("budget")
    if budget_spec:
        budget = UtilizationBudget(schedule=tuple(
            (entry["t"], entry["u"]) for entry in budget_spec))
    else:
        budget = UtilizationBudget(schedule=((0.0, 1.0),))
    wcets_spec = data.get("wcets", {})
    default_wcet = float(wcets_spec.get("default", DEFAULT_WCET))
    wcets: dict = {"default": default_wcet}
    for key, value in wcets_spec.items():
        if key == "default":
            continue
        wcets[float(key)] = float(value)
    return {
        "plant": plant,
        "sor": sor,
        "por": por,
        "h0": float(periods["h0"]),
        "h_max": float(periods["h_max"]),
        "deadline_s": float(data["deadline_s"]),
        "budget": budget,
        "wcets": wcets,
        "poc_period_s": float(data.get("poc_period_s", 0.3)),
    }


def load_config(path) -> dict:
    return parse_config(json.loads(Path(path).read_text()))


def benchmark_from_config(path) -> BenchmarkDef:
    cfg = load_config(path)
    return BenchmarkDef(name="custom", plant=cfg["plant"], sor=cfg["sor"],
                        por=cfg["por"], h0=cfg["h0"], h_max=cfg["h_max"],
                        deadlines=(cfg["deadline_s"],), budget=cfg["budget"],
                        poc_period=cfg["poc_period_s"],
                        wcet=cfg["wcets"]["default"])


def run_stem(benchmark: str, scenario: str, seed) -> str:
    seed_txt = "-".join(str(s) for s in seed) if isinstance(seed, (tuple, list)) \
        else str(seed)
    return f"{benchmark}_{scenario}_{seed_txt}"


def write_trace_csv(path, trace: SimTrace) -> None:
    """Columns: t, x_1..x_n, xhat_1..xhat_n (observer runs only), u_1..u_p,
    controller_id, period_ms, glbf, util."""
    n = trace.states.shape[1]
    p = trace.inputs.shape[1]
    with_est = trace.estimates is not None
    header = (["t"] + [f"x_{i+1}" for i in range(n)]
              + ([f"xhat_{i+1}" for i in range(n)] if with_est else [])
              + [f"u_{i+1}" for i in range(p)]
              + ["controller_id", "period_ms", "glbf", "util"])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for idx in range(len(trace.times)):
            row = [repr(float(trace.times[idx]))]
            row += [repr(float(v)) for v in trace.states[idx]]
            if with_est:
                row += [repr(float(v)) for v in trace.estimates[idx]]
            row += [repr(float(v)) for v in trace.inputs[idx]]
            row += [int(trace.active_controller[idx]),
                    repr(float(trace.periods[idx] * 1000.0)),
                    repr(float(trace.glbf_values[idx])),
                    repr(float(trace.utils[idx]))]
            writer.writerow(row)


def trace_summary_dict(trace: SimTrace) -> dict:
    n_switches = len(trace.switch_events)
    return {
        "outcome": trace.outcome.as_dict(),
        "t_final": float(trace.times[-1]),
        "n_switches": n_switches,
        "notify_raised": bool(trace.notify.any()),
        "switch_events": [e.as_dict() for e in trace.switch_events],
        "controllers_used": sorted(int(c) for c in set(trace.active_controller)),
        "poc_id": POC_ID,
    }


def write_trace_summary(path, trace: SimTrace, extra: dict | None = None) -> None:
    doc = trace_summary_dict(trace)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_batch_summary(path, summary: BatchSummary, extra: dict | None = None) -> None:
    doc = summary.as_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_feasibility_table(path, sweeps: dict[float, SweepResult]) -> None:
    """CSV rows: deadline_s, period_ms, status, delta_k, alpha_ref, alpha."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["deadline_s", "period_ms", "status", "delta_k",
                         "alpha_ref", "alpha"])
        for deadline in sorted(sweeps):
            for attempt in sweeps[deadline].attempts:
                writer.writerow([
                    deadline,
                    round(attempt.h * 1000.0, 9),
                    attempt.status,
                    attempt.delta_k if attempt.delta_k is not None else "",
                    repr(attempt.alpha_ref) if attempt.alpha_ref is not None else "",
                    repr(attempt.alpha) if attempt.alpha is not None else "",
                ])
