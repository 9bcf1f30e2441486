"""State-dependent controller activation with utilization awareness.

At every sampling instant the policy tracks a sliding window of global
log-barrier values, decides between the performance controller (inside the
preferred region) and the backup controllers (outside), and, when the active
task exceeds its utilization budget, steers selection toward longer periods
while the barrier trend shows the state getting safer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sysmodel import Polytope
from .synth import BackupController

POC_ID = -1  # activation id of the performance controller; backups use list indices

REASON_POR_ENTRY = "por-entry"
REASON_DECAY_ARGMAX = "decay-argmax"
REASON_BUDGET_PERIOD_UP = "budget-period-up"
REASON_NOTIFY = "notify"


class BarrierDomainError(ValueError):
    """The barrier was evaluated on or outside the safe region boundary."""


class SchedulabilityError(ValueError):
    """A task's execution time does not fit its period."""


class UnrecoverableState(RuntimeError):
    """The state is outside the preferred region and every backup invariant set."""


@dataclass(frozen=True)
class GlobalBarrier:
    """Logarithmic barrier over the safe region's facets; finite strictly inside,
    diverging to +inf toward the boundary. Lower values mean safer states."""

    sor: Polytope

    def value(self, x) -> float:
        slacks = self.sor.slacks(x)
        if np.any(slacks <= 0.0):
            raise BarrierDomainError(
                "barrier undefined on or outside the safe region")
        return float(-np.sum(np.log(slacks)))


def glbf(barrier: GlobalBarrier, x) -> float:
    return barrier.value(x)


def utilization(wcet: float, h: float) -> float:
    """Processor share of one periodic task: wcet / h."""
    if wcet <= 0:
        raise SchedulabilityError("execution time must be positive")
    if wcet >= h:
        raise SchedulabilityError(
            f"task with wcet {wcet} s saturates period {h} s")
    return wcet / h


@dataclass(frozen=True)
class UtilizationBudget:
    """Piecewise-constant utilization upper bound: (start time, max share) steps."""

    schedule: tuple

    def __post_init__(self):
        entries = tuple((float(t), float(u)) for t, u in self.schedule)
        object.__setattr__(self, "schedule", entries)
        if not entries:
            raise ValueError("budget schedule must not be empty")
        if entries[0][0] != 0.0:
            raise ValueError("budget schedule must start at t=0")
        times = [t for t, _ in entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("budget start times must be strictly increasing")
        for _, u in entries:
            if not 0.0 < u <= 1.0:
                raise ValueError("budget shares must lie in (0, 1]")

    def u_max_at(self, t: float) -> float:
        current = self.schedule[0][1]
        for start, share in self.schedule:
            if start <= t:
                current = share
            else:
                break
        return current


@dataclass(frozen=True)
class PocTask:
    """Scheduling view of the performance controller's periodic task."""

    h: float
    wcet: float

    def __post_init__(self):
        utilization(self.wcet, self.h)  # validates wcet < h


@dataclass(frozen=True)
class ControllerTuple:
    """One switchable backup: the controller, its barrier, and its task share."""

    bsc: BackupController
    util: float

    @classmethod
    def from_bsc(cls, bsc: BackupController) -> "ControllerTuple":
        return cls(bsc=bsc, util=utilization(bsc.wcet, bsc.h))

    def sbf(self, x) -> float:
        return self.bsc.barrier(x)


def make_controller_tuples(bscs) -> list[ControllerTuple]:
    """Wrap backups as tuples sorted ascending by period (slowest last)."""
    ordered = sorted(bscs, key=lambda b: b.h)
    return [ControllerTuple.from_bsc(b) for b in ordered]


def _argmax_decay(tuples, x, allowed) -> int | None:
    """Index maximizing alpha_i * V_i(x) among allowed, safe tuples.

    Ties favor the larger period (the cheaper task), then the lower index.
    """
    best = None
    best_score = -math.inf
    for idx in allowed:
        tup = tuples[idx]
        if tup.sbf(x) > 0.0:
            continue
        score = tup.bsc.alpha * tup.bsc.lyapunov(x)
        better = score > best_score
        if not better and score == best_score and best is not None:
            h_best = tuples[best].bsc.h
            better = tup.bsc.h > h_best or (tup.bsc.h == h_best and idx < best)
        if better:
            best = idx
            best_score = score
    return best


def policy_pi(tuples, x) -> int | None:
    """Decay-greedy selection: among backups whose invariant set contains x,
    pick the one imposing the largest alpha * V at the current state.
    None signals that x lies outside every backup invariant set."""
    return _argmax_decay(tuples, x, range(len(tuples)))


@dataclass
class ScapState:
    """Mutable runtime state of the activation policy (single owner)."""

    lb_window: np.ndarray
    delta_lb: float
    dwell: int
    active: int
    decay_best: float
    notify_flag: bool

    @classmethod
    def init(cls, x0, tuples, por: Polytope, barrier: GlobalBarrier,
             delta_t: float) -> "ScapState":
        """Initial activation at t=0: performance controller inside the
        preferred region, otherwise the decay-greedy backup choice. The barrier
        window is seeded with the initial value so the trend starts neutral."""
        max_h = max(t.bsc.h for t in tuples)
        length = max(2, math.ceil(delta_t / max_h))
        window = np.full(length, barrier.value(x0))
        if por.contains(x0):
            active = POC_ID
        else:
            choice = policy_pi(tuples, x0)
            if choice is None:
                raise UnrecoverableState(
                    "initial state is outside the preferred region and every "
                    "backup invariant set")
            active = choice
        return cls(lb_window=window, delta_lb=0.0, dwell=2, active=active,
                   decay_best=0.0, notify_flag=False)

    def push_barrier(self, value: float) -> float:
        """Shift the window left, append the new value, and return the mean
        consecutive difference (the average barrier slope over the window)."""
        self.lb_window[:-1] = self.lb_window[1:]
        self.lb_window[-1] = value
        self.delta_lb = float(np.diff(self.lb_window).mean())
        return self.delta_lb


@dataclass(frozen=True)
class SwitchEvent:
    """Logged whenever the active controller changes."""

    t: float
    from_controller: int
    to_controller: int
    reason: str
    util: float
    delta_lb: float

    def as_dict(self) -> dict:
        return {"t": self.t, "from_controller": self.from_controller,
                "to_controller": self.to_controller, "reason": self.reason,
                "util": self.util, "delta_lb": self.delta_lb}


@dataclass(frozen=True)
class ScapDecision:
    """Outcome of one activation step."""

    active: int
    switched: bool
    reason: str | None
    util: float
    delta_lb: float
    notify: bool
    event: SwitchEvent | None = None


def _active_util(state: ScapState, tuples, poc: PocTask) -> float:
    if state.active == POC_ID:
        return utilization(poc.wcet, poc.h)
    return tuples[state.active].util


def scap_step(state: ScapState, tuples, poc: PocTask, por: Polytope,
              budget: UtilizationBudget, barrier: GlobalBarrier,
              x, t: float) -> tuple[ScapDecision, ScapState]:
    """One activation decision at a sampling instant.

    Updates the barrier window and dwell counter, then either hands control to
    the performance controller (preferred region reached, dwell expired) or
    re-evaluates the backup choice. Re-evaluation happens whenever the dwell
    counter has expired or the active task exceeds the current budget; while
    over budget with a falling barrier trend, candidates are restricted to
    periods longer than the active one, and with a non-falling trend the best
    decay wins outright and the notify flag asks the scheduler for headroom.
    """
    delta_lb = state.push_barrier(barrier.value(x))
    util = _active_util(state, tuples, poc)
    state.dwell -= 1
    u_max = budget.u_max_at(t)

    switched = False
    reason = None

    in_por = por.contains(x)
    if in_por and state.dwell <= 0:
        if state.active != POC_ID:
            switched = True
            reason = REASON_POR_ENTRY
            previous = state.active
            state.active = POC_ID
            state.dwell = 2
    elif state.dwell <= 0 or util > u_max:
        over_budget = util > u_max
        state.decay_best = 0.0
        if over_budget:
            if state.delta_lb < 0.0:
                active_h = poc.h if state.active == POC_ID else tuples[state.active].bsc.h
                allowed = [i for i, tup in enumerate(tuples) if tup.bsc.h > active_h]
                reason_if_switch = REASON_BUDGET_PERIOD_UP
            else:
                allowed = range(len(tuples))
                state.notify_flag = True
                reason_if_switch = REASON_NOTIFY
        else:
            allowed = range(len(tuples))
            reason_if_switch = REASON_DECAY_ARGMAX
        choice = _argmax_decay(tuples, x, allowed)
        if choice is None and not in_por and policy_pi(tuples, x) is None:
            raise UnrecoverableState(
                f"state at t={t} s is outside the preferred region and every "
                "backup invariant set")
        if choice is not None:
            state.decay_best = tuples[choice].bsc.alpha * tuples[choice].bsc.lyapunov(x)
            if choice != state.active:
                switched = True
                reason = reason_if_switch
                previous = state.active
                state.active = choice
                state.dwell = 2

    event = None
    if switched:
        event = SwitchEvent(t=t, from_controller=previous,
                            to_controller=state.active, reason=reason,
                            util=util, delta_lb=delta_lb)
    decision = ScapDecision(active=state.active, switched=switched,
                            reason=reason, util=util, delta_lb=delta_lb,
                            notify=state.notify_flag, event=event)
    return decision, state
