"""Activation policy: barrier, selection rule, and the runtime step."""

import math

import numpy as np
import pytest

from bsckit.scap import (POC_ID, REASON_BUDGET_PERIOD_UP, REASON_DECAY_ARGMAX,
                         REASON_NOTIFY, REASON_POR_ENTRY, BarrierDomainError,
                         ControllerTuple, GlobalBarrier, PocTask, ScapState,
                         SchedulabilityError, UnrecoverableState,
                         UtilizationBudget, glbf, make_controller_tuples,
                         policy_pi, scap_step, utilization)
from bsckit.sysmodel import Polytope
from bsckit.synth import BackupController

SOR2 = Polytope.box([-1, -1], [1, 1])
BARRIER2 = GlobalBarrier(SOR2)


def toy_bsc(alpha, h, qlf, level=1.0, wcet=0.001):
    qlf = np.atleast_2d(np.asarray(qlf, dtype=float))
    return BackupController(gain=np.zeros((1, qlf.shape[0])), qlf=qlf,
                            level=level, alpha=alpha, h=h, wcet=wcet)


def test_glbf_examples():
    assert glbf(BARRIER2, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
    value = glbf(BARRIER2, [0.9, 0.0])
    assert value == pytest.approx(-math.log(0.1) - math.log(1.9), rel=1e-12)
    assert value == pytest.approx(1.66073, abs=5e-6)
    with pytest.raises(BarrierDomainError):
        glbf(BARRIER2, [1.0, 0.0])
    with pytest.raises(BarrierDomainError):
        glbf(BARRIER2, [1.5, 0.0])


def test_glbf_diverges_toward_boundary():
    values = [glbf(BARRIER2, [x, 0.0]) for x in (0.9, 0.99, 0.999999)]
    assert values[0] < values[1] < values[2]
    assert values[2] > 12.0


def test_utilization_examples():
    assert utilization(0.010, 0.100) == pytest.approx(0.1)
    assert utilization(0.005, 0.020) == pytest.approx(0.25)
    with pytest.raises(SchedulabilityError):
        utilization(0.1, 0.1)
    with pytest.raises(SchedulabilityError):
        utilization(0.0, 0.1)


def test_budget_validation_and_lookup():
    budget = UtilizationBudget(schedule=((0.0, 0.5), (1.0, 0.1), (2.0, 0.8)))
    assert budget.u_max_at(0.0) == 0.5
    assert budget.u_max_at(0.999) == 0.5
    assert budget.u_max_at(1.0) == 0.1
    assert budget.u_max_at(5.0) == 0.8
    with pytest.raises(ValueError):
        UtilizationBudget(schedule=((0.5, 0.5),))
    with pytest.raises(ValueError):
        UtilizationBudget(schedule=((0.0, 0.5), (0.0, 0.2)))
    with pytest.raises(ValueError):
        UtilizationBudget(schedule=((0.0, 1.5),))


def test_policy_pi_single_safe_tuple():
    tuples = [ControllerTuple.from_bsc(toy_bsc(0.3, 0.1, [[1.0]], level=4.0))]
    assert policy_pi(tuples, [1.0]) == 0
    assert policy_pi(tuples, [3.0]) is None  # outside the invariant set


def test_policy_pi_argmax_example():
    # scores 0.3 * 2 = 0.6 vs 0.6 * 0.9 = 0.54: the first wins
    tuples = make_controller_tuples([
        toy_bsc(0.3, 0.1, [[2.0]], level=4.0),
        toy_bsc(0.6, 0.2, [[0.9]], level=4.0),
    ])
    # sorting by period keeps the 0.1 s controller at index 0
    x = [1.0]
    assert tuples[0].bsc.alpha == 0.3
    assert policy_pi(tuples, x) == 0


def test_policy_pi_tie_breaks_toward_longer_period():
    tuples = make_controller_tuples([
        toy_bsc(0.5, 0.1, [[1.0]], level=4.0),
        toy_bsc(0.25, 0.2, [[2.0]], level=8.0),
    ])
    # identical scores 0.5 * V at x: 0.5*1 vs 0.25*2
    assert policy_pi(tuples, [1.0]) == 1


def test_policy_pi_scale_invariance(rng):
    base = [
        toy_bsc(0.3, 0.1, [[2.0, 0.1], [0.1, 1.0]], level=3.0),
        toy_bsc(0.5, 0.2, [[1.0, 0.0], [0.0, 0.5]], level=2.0),
        toy_bsc(0.7, 0.4, [[0.5, 0.0], [0.0, 2.0]], level=4.0),
    ]
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, size=2)
        scale = float(rng.uniform(0.1, 10.0))
        scaled = [toy_bsc(b.alpha, b.h, b.qlf * scale, level=b.level * scale)
                  for b in base]
        assert policy_pi(make_controller_tuples(base), x) == \
            policy_pi(make_controller_tuples(scaled), x)


POR2 = Polytope.box([-0.2, -0.2], [0.2, 0.2])
WIDE_BUDGET = UtilizationBudget(schedule=((0.0, 1.0),))
POC = PocTask(h=0.4, wcet=0.001)


def two_tuples():
    return make_controller_tuples([
        toy_bsc(0.3, 0.1, np.eye(2), level=2.0),
        toy_bsc(0.5, 0.2, 0.8 * np.eye(2), level=2.0),
    ])


def test_state_init_inside_preferred_picks_poc():
    state = ScapState.init(np.zeros(2), two_tuples(), POR2, BARRIER2, 1.0)
    assert state.active == POC_ID
    assert state.dwell == 2
    assert state.delta_lb == 0.0
    assert len(state.lb_window) == max(2, math.ceil(1.0 / 0.2))


def test_state_init_outside_preferred_uses_argmax():
    state = ScapState.init(np.array([0.8, 0.0]), two_tuples(), POR2,
                           BARRIER2, 1.0)
    # scores: 0.3 * 0.64 = 0.192 vs 0.5 * 0.512 = 0.256
    assert state.active == 1


def test_state_init_unrecoverable():
    tiny = make_controller_tuples([toy_bsc(0.3, 0.1, np.eye(2), level=0.01)])
    with pytest.raises(UnrecoverableState):
        ScapState.init(np.array([0.9, 0.0]), tiny, POR2, BARRIER2, 1.0)


def test_window_slope_telescopes():
    state = ScapState.init(np.zeros(2), two_tuples(), POR2, BARRIER2, 1.0)
    values = [0.5, 0.4, 0.9, 0.1, 0.3]
    for v in values:
        state.push_barrier(v)
    window = state.lb_window
    expected = (window[-1] - window[0]) / (len(window) - 1)
    assert state.delta_lb == pytest.approx(expected, rel=1e-12)


def step(state, tuples, x, t, por=POR2, budget=WIDE_BUDGET, poc=POC):
    return scap_step(state, tuples, poc, por, budget, BARRIER2,
                     np.asarray(x, dtype=float), t)


def test_step_preferred_entry_needs_expired_dwell():
    tuples = two_tuples()
    state = ScapState.init(np.array([0.8, 0.0]), tuples, POR2, BARRIER2, 1.0)
    assert state.active == 1
    d1, _ = step(state, tuples, [0.0, 0.0], 0.2)   # dwell 2 -> 1
    assert d1.active == 1 and not d1.switched
    d2, _ = step(state, tuples, [0.0, 0.0], 0.4)   # dwell 1 -> 0: POC now
    assert d2.switched and d2.active == POC_ID
    assert d2.reason == REASON_POR_ENTRY
    assert state.dwell == 2


def test_step_outside_preferred_argmax_resets_dwell():
    tuples = two_tuples()
    state = ScapState.init(np.array([0.8, 0.0]), tuples, POR2, BARRIER2, 1.0)
    state.active = 0  # force the faster controller so a switch is due
    state.dwell = 0
    decision, _ = step(state, tuples, [0.8, 0.0], 0.1)
    assert decision.switched and decision.active == 1
    assert decision.reason == REASON_DECAY_ARGMAX
    assert state.dwell == 2


def test_step_budget_filter_restricts_to_longer_periods():
    # active 60 ms task over budget; safe candidates at 40/80/120 ms
    tuples = make_controller_tuples([
        toy_bsc(0.20, 0.040, np.eye(2), level=2.0, wcet=0.03),
        toy_bsc(0.30, 0.060, np.eye(2), level=2.0, wcet=0.03),
        toy_bsc(0.25, 0.080, np.eye(2), level=2.0, wcet=0.03),
        toy_bsc(0.22, 0.120, np.eye(2), level=2.0, wcet=0.03),
    ])
    budget = UtilizationBudget(schedule=((0.0, 0.45),))  # 60 ms util = 0.5 > 0.45
    state = ScapState.init(np.array([0.8, 0.0]), tuples, POR2, BARRIER2, 1.0)
    state.active = 1
    state.dwell = 2
    # descending history that stays above the barrier value pushed at x
    state.lb_window[:] = np.linspace(4.0, 2.0, len(state.lb_window))
    decision, _ = step(state, tuples, [0.8, 0.0], 0.06, budget=budget)
    assert decision.delta_lb < 0.0
    assert decision.switched
    assert tuples[decision.active].bsc.h > 0.060
    # among 80/120 ms the larger score wins: 0.25 vs 0.22 at equal V
    assert decision.active == 2
    assert decision.reason == REASON_BUDGET_PERIOD_UP
    assert not decision.notify


def test_step_budget_nonfalling_trend_notifies_and_frees_choice():
    tuples = make_controller_tuples([
        toy_bsc(0.60, 0.040, np.eye(2), level=2.0, wcet=0.03),
        toy_bsc(0.30, 0.060, np.eye(2), level=2.0, wcet=0.03),
        toy_bsc(0.25, 0.080, np.eye(2), level=2.0, wcet=0.03),
    ])
    budget = UtilizationBudget(schedule=((0.0, 0.45),))
    state = ScapState.init(np.array([0.8, 0.0]), tuples, POR2, BARRIER2, 1.0)
    state.active = 1
    state.dwell = 2
    state.lb_window[:] = np.linspace(0.5, 1.0, len(state.lb_window))  # rising
    decision, _ = step(state, tuples, [0.8, 0.0], 0.06, budget=budget)
    # highest decay regardless of period, despite being the fastest task
    assert decision.active == 0
    assert decision.notify and state.notify_flag
    assert decision.reason == REASON_NOTIFY


def test_step_unrecoverable_outside_all_sets():
    tuples = make_controller_tuples([toy_bsc(0.3, 0.1, np.eye(2), level=0.25)])
    state = ScapState.init(np.array([0.4, 0.0]), tuples, POR2, BARRIER2, 1.0)
    state.dwell = 0
    with pytest.raises(UnrecoverableState):
        step(state, tuples, [0.9, 0.0], 0.1)


def test_step_keeps_current_when_filter_empties_candidates():
    tuples = make_controller_tuples([
        toy_bsc(0.30, 0.060, np.eye(2), level=2.0, wcet=0.03),
    ])
    budget = UtilizationBudget(schedule=((0.0, 0.45),))
    state = ScapState.init(np.array([0.8, 0.0]), tuples, POR2, BARRIER2, 1.0)
    state.dwell = 2
    state.lb_window[:] = np.linspace(4.0, 2.0, len(state.lb_window))
    decision, _ = step(state, tuples, [0.8, 0.0], 0.06, budget=budget)
    # over budget, falling trend, but no longer-period candidate exists
    assert decision.delta_lb < 0.0
    assert not decision.switched and decision.active == 0


def test_dwell_separates_switches_in_step_sequence():
    tuples = two_tuples()
    state = ScapState.init(np.array([0.8, 0.0]), tuples, POR2, BARRIER2, 1.0)
    switches = []
    xs = [[0.8, 0.0], [0.7, 0.0], [0.1, 0.0], [0.08, 0.0], [0.05, 0.0],
          [0.6, 0.0], [0.55, 0.0], [0.5, 0.0], [0.05, 0.0], [0.02, 0.0]]
    for k, x in enumerate(xs):
        decision, _ = step(state, tuples, x, 0.1 * (k + 1))
        switches.append(1 if decision.switched else 0)
    # between any two switches there are at least two non-switching steps
    last = None
    for idx, flag in enumerate(switches):
        if flag:
            if last is not None:
                assert idx - last >= 2
            last = idx
