"""Shared fixtures. Synthesis sweeps are session-scoped because the solver
calls dominate test runtime and every consumer reads them immutably."""

from __future__ import annotations

import numpy as np
import pytest

from bsckit.benchmarks import builtin_benchmark
from bsckit.synth import sweep_periods


@pytest.fixture(scope="session")
def ipd():
    return builtin_benchmark("ipd")


@pytest.fixture(scope="session")
def ald():
    return builtin_benchmark("ald")


@pytest.fixture(scope="session")
def ipd_sweep(ipd):
    return sweep_periods(ipd.plant, ipd.sor, ipd.por, 2.5, ipd.h0, ipd.h_max,
                         wcets=ipd.wcet)


@pytest.fixture(scope="session")
def ald_sweep(ald):
    return sweep_periods(ald.plant, ald.sor, ald.por, 2.5, ald.h0, ald.h_max,
                         wcets=ald.wcet)


@pytest.fixture(scope="session")
def ipd_controllers(ipd_sweep):
    assert ipd_sweep.controllers, "benchmark synthesis unexpectedly empty"
    return ipd_sweep.controllers


@pytest.fixture(scope="session")
def ald_controllers(ald_sweep):
    assert ald_sweep.controllers, "benchmark synthesis unexpectedly empty"
    return ald_sweep.controllers


@pytest.fixture(scope="session")
def ipd_context(ipd):
    return ipd.poc_context()


@pytest.fixture(scope="session")
def ald_context(ald):
    return ald.poc_context()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
