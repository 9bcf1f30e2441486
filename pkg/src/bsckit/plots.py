"""Report figures rendered next to the delimited outputs.

Two views mirror how these closed loops are usually read: state evolution with
the active period staircase on a twin axis, and a phase-plane slice showing
the safe/preferred boxes, the invariant-set cross sections, and trajectories.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scap import POC_ID
from .simkit import SimTrace

_TRAJ_COLOR = "tab:blue"


def trace_figure(path, trace: SimTrace, state_labels, title: str = "",
                 state_dims=None) -> None:
    """States over time (left axis) with the active period in ms (right axis).
    Switch instants are marked on the period staircase."""
    dims = list(range(trace.states.shape[1])) if state_dims is None else list(state_dims)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for d in dims:
        ax.plot(trace.times, trace.states[:, d], label=state_labels[d], lw=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("state")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.step(trace.times, trace.periods * 1000.0, where="post",
             color="tab:brown", lw=1.4, label="active period")
    for event in trace.switch_events:
        ax2.axvline(event.t, color="tab:brown", alpha=0.25, lw=0.8)
    ax2.set_ylabel("period [ms]", color="tab:brown")
    ax2.tick_params(axis="y", colors="tab:brown")
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _ellipse_slice(qlf: np.ndarray, level: float, dims) -> np.ndarray:
    """Boundary of the invariant set's cross section through the origin in the
    selected coordinate plane (other coordinates fixed at zero)."""
    i, j = dims
    sub = qlf[np.ix_([i, j], [i, j])]
    theta = np.linspace(0.0, 2.0 * np.pi, 200)
    circle = np.vstack([np.cos(theta), np.sin(theta)])
    chol = np.linalg.cholesky(sub)
    return np.sqrt(level) * np.linalg.solve(chol.T, circle)


def _box_outline(poly, dims) -> np.ndarray | None:
    bounds = poly.box_bounds()
    if bounds is None:
        return None
    lo, hi = bounds
    i, j = dims
    xs = [lo[i], hi[i], hi[i], lo[i], lo[i]]
    ys = [lo[j], lo[j], hi[j], hi[j], lo[j]]
    return np.array([xs, ys])


def phase_figure(path, traces, controllers, sor, por, dims, state_labels,
                 title: str = "") -> None:
    """Trajectories in one coordinate plane with the safe box, the preferred
    box, and each backup's invariant-set cross section."""
    fig, ax = plt.subplots(figsize=(6, 5.5))
    sor_line = _box_outline(sor, dims)
    if sor_line is not None:
        ax.plot(sor_line[0], sor_line[1], "k-", lw=1.5, label="safe region")
    por_line = _box_outline(por, dims)
    if por_line is not None:
        ax.plot(por_line[0], por_line[1], color="goldenrod", lw=1.5,
                label="preferred region")
    for idx, bsc in enumerate(sorted(controllers, key=lambda b: b.h)):
        outline = _ellipse_slice(bsc.qlf, bsc.level, dims)
        ax.plot(outline[0], outline[1], color="tab:red", alpha=0.45, lw=0.9,
                label="invariant sets" if idx == 0 else None)
    shown = False
    for trace in traces:
        ax.plot(trace.states[:, dims[0]], trace.states[:, dims[1]],
                color=_TRAJ_COLOR, alpha=0.6, lw=0.9,
                label="trajectories" if not shown else None)
        ax.plot(trace.states[0, dims[0]], trace.states[0, dims[1]], ".",
                color=_TRAJ_COLOR, ms=5)
        shown = True
    ax.set_xlabel(state_labels[dims[0]])
    ax.set_ylabel(state_labels[dims[1]])
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def activation_figure(path, trace: SimTrace, title: str = "") -> None:
    """Barrier value, utilization vs budget, and active controller id over time."""
    fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(trace.times, trace.glbf_values, lw=1.0)
    axes[0].set_ylabel("log barrier")
    axes[0].grid(True, alpha=0.3)
    axes[1].step(trace.times, trace.utils, where="post", lw=1.0)
    axes[1].set_ylabel("utilization")
    axes[1].grid(True, alpha=0.3)
    ids = trace.active_controller.astype(float)
    axes[2].step(trace.times, ids, where="post", lw=1.0)
    axes[2].set_ylabel(f"controller id ({POC_ID}=performance)")
    axes[2].set_xlabel("time [s]")
    axes[2].grid(True, alpha=0.3)
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
