"""Multi-rate closed-loop simulation with the activation policy in the loop.

The continuous plant is integrated with fixed-step RK4 between sampling
instants; inputs are held zero-order. All candidate periods are multiples of
the base period, so sampling instants live on an integer tick grid and
alignment is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .scap import (POC_ID, BarrierDomainError, GlobalBarrier, PocTask,
                   ScapState, SwitchEvent, UtilizationBudget, make_controller_tuples,
                   scap_step, utilization)
from .sysmodel import DiscreteLoop, LinearPlant, Polytope, discretize
from .synth import BackupController, synth_kalman

OUTCOME_RECOVERED = "recovered"
OUTCOME_DEADLINE_MISSED = "deadline_missed"
OUTCOME_SAFETY_VIOLATED = "safety_violated"

DECAY_AUDIT_RTOL = 1e-7


@dataclass(frozen=True)
class ScapContext:
    """Everything the activation policy needs besides the backup set."""

    sor: Polytope
    por: Polytope
    budget: UtilizationBudget
    poc_loop: DiscreteLoop  # must carry poc_gain
    poc_wcet: float
    delta_t: float

    def __post_init__(self):
        if self.poc_loop.poc_gain is None:
            raise ValueError("poc_loop must carry a stabilizing poc_gain")
        utilization(self.poc_wcet, self.poc_loop.h)

    @property
    def poc_task(self) -> PocTask:
        return PocTask(h=self.poc_loop.h, wcet=self.poc_wcet)


@dataclass(frozen=True)
class SimConfig:
    """Run settings for one closed-loop simulation."""

    t_end: float
    fine_step: float
    noise_on: bool
    seed: int | tuple
    observer_on: bool
    x0: np.ndarray
    deadline: float
    xhat0: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.xhat0 is not None:
            object.__setattr__(self, "xhat0", np.asarray(self.xhat0, dtype=float))
        if self.t_end < self.deadline:
            raise ValueError("simulation horizon must cover the deadline")
        if self.fine_step <= 0:
            raise ValueError("fine_step must be positive")


@dataclass(frozen=True)
class SimOutcome:
    """First decisive event of a run."""

    kind: str  # recovered | deadline_missed | safety_violated
    time: float | None = None

    @property
    def recovered(self) -> bool:
        return self.kind == OUTCOME_RECOVERED

    def as_dict(self) -> dict:
        return {"kind": self.kind, "time": self.time}


@dataclass
class SimTrace:
    """Logged closed-loop run on the fine integration grid, plus the sampling
    instants used for decay audits."""

    times: np.ndarray
    states: np.ndarray
    estimates: np.ndarray | None
    inputs: np.ndarray
    active_controller: np.ndarray
    glbf_values: np.ndarray
    periods: np.ndarray
    utils: np.ndarray
    notify: np.ndarray
    switch_events: list[SwitchEvent]
    outcome: SimOutcome
    sample_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    sample_states: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    sample_controller: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def _rk4_step(phi: np.ndarray, drive: np.ndarray, x: np.ndarray,
              dt: float) -> np.ndarray:
    """One fixed step of xdot = phi x + drive with drive held constant."""
    k1 = phi @ x + drive
    k2 = phi @ (x + 0.5 * dt * k1) + drive
    k3 = phi @ (x + 0.5 * dt * k2) + drive
    k4 = phi @ (x + dt * k3) + drive
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _tick_layout(h0: float, fine_step: float, periods) -> tuple[float, int, dict]:
    """Snap the fine step to an integer divisor of the base period and express
    every controller period in fine ticks."""
    per_base = max(1, round(h0 / fine_step))
    dt = h0 / per_base
    ticks = {}
    for h in periods:
        ratio = h / dt
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"period {h} s does not align with the base grid")
        ticks[h] = n
    return dt, per_base, ticks


def simulate(plant: LinearPlant, controllers, ctx: ScapContext,
             config: SimConfig) -> SimTrace:
    """Run one closed loop under the activation policy.

    The initial state must be strictly inside the safe region and inside the
    preferred region or at least one backup invariant set. Recovery is declared
    at the first sampling instant observed inside the preferred region; the
    deadline is checked in continuous time; leaving the safe region aborts the
    run as a safety violation.
    """
    tuples = make_controller_tuples(controllers)
    if not tuples:
        raise ValueError("need at least one backup controller")
    barrier = GlobalBarrier(ctx.sor)
    poc = ctx.poc_task

    h0 = min(t.bsc.h for t in tuples)
    all_periods = [t.bsc.h for t in tuples] + [poc.h]
    min_period = min(all_periods)
    if config.fine_step > min_period / 20.0 + 1e-12:
        raise ValueError("fine_step must be at most the smallest period / 20")
    dt, _, period_ticks = _tick_layout(h0, config.fine_step, all_periods)

    loops = {i: discretize(plant, t.bsc.h) for i, t in enumerate(tuples)}
    loops[POC_ID] = ctx.poc_loop
    gains = {i: t.bsc.gain for i, t in enumerate(tuples)}
    gains[POC_ID] = ctx.poc_loop.poc_gain
    kalman = {}
    if config.observer_on:
        for cid, loop in loops.items():
            kalman[cid] = (loop.kalman_gain if loop.kalman_gain is not None
                           else synth_kalman(loop, plant.c_out, plant.q_w, plant.r_v))

    rng = np.random.default_rng(config.seed)
    x = config.x0.copy()
    # xhat_pred is the one-step-ahead prediction carried between sampling
    # instants; xhat_now is the estimate the active controller acts on
    xhat_pred = (config.xhat0.copy() if config.xhat0 is not None else x.copy())
    xhat_now = xhat_pred.copy()
    if not ctx.sor.contains_strictly(x):
        raise BarrierDomainError("initial state must lie strictly inside the safe region")

    n = plant.n_states
    n_ticks = round(config.t_end / dt)
    times, states, estimates, inputs = [], [], [], []
    actives, glbfs, periods_log, utils_log, notifies = [], [], [], [], []
    sample_times, sample_states, sample_ids = [], [], []
    events: list[SwitchEvent] = []

    state = None
    u = np.zeros(plant.n_inputs)
    recovered_at = None
    violated_at = None
    next_sample = 0

    for tick in range(n_ticks + 1):
        t = tick * dt
        if tick == next_sample:
            if state is None:
                state = ScapState.init(x, tuples, ctx.por, barrier, ctx.delta_t)
            else:
                decision, state = scap_step(state, tuples, poc, ctx.por,
                                            ctx.budget, barrier, x, t)
                if decision.event is not None:
                    events.append(decision.event)
            active = state.active
            loop = loops[active]
            if recovered_at is None and ctx.por.contains(x):
                recovered_at = t
            sample_times.append(t)
            sample_states.append(x.copy())
            sample_ids.append(active)
            if config.observer_on:
                v = (rng.multivariate_normal(np.zeros(plant.r_v.shape[0]), plant.r_v)
                     if config.noise_on else 0.0)
                y = plant.c_out @ x + v
                xhat_now = xhat_pred
                u = -gains[active] @ xhat_now
                # predictor update toward this controller's next instant
                xhat_pred = (loop.a @ xhat_now + loop.b @ u
                             + kalman[active] @ (y - plant.c_out @ xhat_now))
            else:
                u = -gains[active] @ x
            next_sample = tick + period_ticks[loop.h]

        times.append(t)
        states.append(x.copy())
        if config.observer_on:
            estimates.append(xhat_now.copy())
        inputs.append(u.copy())
        actives.append(state.active)
        glbfs.append(barrier.value(x))
        h_active = poc.h if state.active == POC_ID else tuples[state.active].bsc.h
        periods_log.append(h_active)
        utils_log.append(utilization(poc.wcet, poc.h) if state.active == POC_ID
                         else tuples[state.active].util)
        notifies.append(state.notify_flag)

        if tick == n_ticks:
            break
        w = (rng.multivariate_normal(np.zeros(n), plant.q_w * dt)
             if config.noise_on else np.zeros(n))
        x = _rk4_step(plant.phi, plant.gamma @ u + w, x, dt)
        if not ctx.sor.contains_strictly(x):
            violated_at = (tick + 1) * dt
            break

    outcome = _classify_outcome(recovered_at, violated_at, config.deadline)
    return SimTrace(
        times=np.asarray(times),
        states=np.asarray(states),
        estimates=np.asarray(estimates) if config.observer_on else None,
        inputs=np.asarray(inputs),
        active_controller=np.asarray(actives, dtype=int),
        glbf_values=np.asarray(glbfs),
        periods=np.asarray(periods_log),
        utils=np.asarray(utils_log),
        notify=np.asarray(notifies, dtype=bool),
        switch_events=events,
        outcome=outcome,
        sample_times=np.asarray(sample_times),
        sample_states=np.asarray(sample_states),
        sample_controller=np.asarray(sample_ids, dtype=int),
    )


def _classify_outcome(recovered_at, violated_at, deadline) -> SimOutcome:
    t_rec = recovered_at if (recovered_at is not None and recovered_at <= deadline) else math.inf
    t_viol = violated_at if violated_at is not None else math.inf
    t_miss = deadline if t_rec == math.inf else math.inf
    first = min(t_rec, t_viol, t_miss)
    if first == math.inf or first == t_viol:
        if t_viol < math.inf:
            return SimOutcome(OUTCOME_SAFETY_VIOLATED, violated_at)
    if first == t_rec:
        return SimOutcome(OUTCOME_RECOVERED, recovered_at)
    return SimOutcome(OUTCOME_DEADLINE_MISSED, None)


class SamplerExhausted(RuntimeError):
    """Rejection sampling failed to find an admissible initial state."""


def make_rejection_sampler(sor: Polytope, por: Polytope, controllers,
                           max_rejections: int = 10 ** 6):
    """Sampler for initial states in (safe \\ preferred) intersected with the
    union of backup invariant sets; draws uniformly over the safe box.
    Rejection runs in vectorized batches; the first admissible draw wins."""
    bounds = sor.box_bounds()
    if bounds is None:
        raise ValueError("rejection sampling needs an axis-aligned safe region")
    lo, hi = bounds
    qlfs = [(b.qlf, b.level) for b in controllers]

    def sampler(rng: np.random.Generator, batch: int = 4096) -> np.ndarray:
        drawn = 0
        while drawn < max_rejections:
            pts = rng.uniform(lo, hi, size=(batch, lo.shape[0]))
            drawn += batch
            in_por = np.all(
                (por.b_vec - (pts - por.center) @ por.a_mat.T) >= 0.0, axis=1)
            in_any = np.zeros(batch, dtype=bool)
            for qlf, level in qlfs:
                in_any |= np.einsum("ij,jk,ik->i", pts, qlf, pts) <= level
            strict = np.all(
                (sor.b_vec - (pts - sor.center) @ sor.a_mat.T) > 0.0, axis=1)
            ok = np.nonzero(~in_por & in_any & strict)[0]
            if ok.size:
                return pts[ok[0]]
        raise SamplerExhausted(
            "no admissible initial state found; the invariant sets may be "
            "too tight around the preferred region")

    return sampler


@dataclass(frozen=True)
class BatchSummary:
    """Aggregate of independent seeded runs."""

    n_runs: int
    recovery_rate: float
    max_recovery_time: float
    violations_count: int
    outcomes: list[SimOutcome]
    initial_states: list[np.ndarray]

    def as_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "recovery_rate": self.recovery_rate,
            "max_recovery_time": self.max_recovery_time,
            "violations_count": self.violations_count,
            "outcomes": [o.as_dict() for o in self.outcomes],
            "initial_states": [list(x) for x in self.initial_states],
        }


def batch_recovery(plant: LinearPlant, controllers, ctx: ScapContext,
                   n_runs: int, sampler, config: SimConfig,
                   on_trace=None) -> BatchSummary:
    """Run independent simulations from sampled initial states.

    Run i draws its initial state and noise stream from generators derived
    from (config.seed, i), so the batch is reproducible run by run. When given,
    `on_trace(i, trace)` is called after each run (reporting hook).
    """
    outcomes: list[SimOutcome] = []
    x0s: list[np.ndarray] = []
    base_seed = config.seed
    for i in range(n_runs):
        rng = np.random.default_rng([_seed_scalar(base_seed), i])
        x0 = sampler(rng)
        run_config = replace(config, x0=x0, seed=(_seed_scalar(base_seed), i, 1))
        trace = simulate(plant, controllers, ctx, run_config)
        outcomes.append(trace.outcome)
        x0s.append(x0)
        if on_trace is not None:
            on_trace(i, trace)
    recovered = [o for o in outcomes if o.recovered]
    rate = len(recovered) / n_runs if n_runs else 0.0
    max_time = max((o.time for o in recovered), default=0.0)
    violations = sum(1 for o in outcomes if o.kind == OUTCOME_SAFETY_VIOLATED)
    return BatchSummary(n_runs=n_runs, recovery_rate=rate,
                        max_recovery_time=max_time,
                        violations_count=violations, outcomes=outcomes,
                        initial_states=x0s)


def _seed_scalar(seed) -> int:
    if isinstance(seed, (tuple, list)):
        return int(seed[0])
    return int(seed)


@dataclass(frozen=True)
class DecayAuditFailure:
    t: float
    controller: int
    ratio: float
    bound: float


@dataclass(frozen=True)
class DecayAuditReport:
    """Per-step certified-contraction audit of a noise-free trace."""

    passed: bool
    n_pairs: int
    n_skipped: int
    worst_margin: float
    failures: list[DecayAuditFailure]


def check_decay_trace(trace: SimTrace, bsc_schedule) -> DecayAuditReport:
    """Audit every consecutive pair of sampling instants governed by one backup
    controller: V(x_next) must not exceed (1 - alpha + tol) V(x). Segments run
    by the performance controller carry no certificate and are skipped.
    Intended for noise-free traces."""
    ordered = sorted(bsc_schedule, key=lambda b: b.h)
    worst = -math.inf
    n_pairs = 0
    n_skipped = 0
    failures: list[DecayAuditFailure] = []
    ids = trace.sample_controller
    xs = trace.sample_states
    ts = trace.sample_times
    for j in range(len(ids) - 1):
        cid = ids[j]
        if cid == POC_ID:
            n_skipped += 1
            continue
        bsc = ordered[cid]
        v_now = bsc.lyapunov(xs[j])
        v_next = bsc.lyapunov(xs[j + 1])
        bound = (1.0 - bsc.alpha + DECAY_AUDIT_RTOL) * v_now
        margin = v_next - bound
        worst = max(worst, margin / v_now if v_now > 0 else margin)
        n_pairs += 1
        if v_next > bound:
            failures.append(DecayAuditFailure(
                t=float(ts[j]), controller=int(cid),
                ratio=float(v_next / v_now) if v_now > 0 else math.inf,
                bound=float(1.0 - bsc.alpha + DECAY_AUDIT_RTOL)))
    return DecayAuditReport(passed=not failures, n_pairs=n_pairs,
                            n_skipped=n_skipped,
                            worst_margin=worst if worst > -math.inf else 0.0,
                            failures=failures)
