"""Recovery deadlines translated into per-period quadratic-Lyapunov decay targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sysmodel import GeometryError, Polytope, boundary_norm_extrema

# Guards floor() against binary-float quotients like 1.0/0.1 = 9.999...
_FLOOR_NUDGE = 1e-9


class DeadlineInfeasible(ValueError):
    """The deadline admits no full sampling step at the requested period."""


@dataclass(frozen=True)
class RecoverySpec:
    """Recovery requirement: hard deadline plus optional exponential-stability data.

    m_const (the overshoot constant of the exponential envelope) is carried for
    completeness; the decay-target computation does not use it.
    """

    delta_t: float
    gamma: float | None = None
    m_const: float | None = None
    delta_small: float | None = None

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError("recovery deadline must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("decay rate gamma must be positive")
        if self.m_const is not None and self.m_const <= 0:
            raise ValueError("overshoot constant must be positive")
        if self.delta_small is not None and not 0.0 < self.delta_small < 1.0:
            raise ValueError("per-step contraction must lie in (0, 1)")


@dataclass(frozen=True)
class DecayTarget:
    """Sampling-step deadline and minimum per-step Lyapunov decay for one period."""

    h: float
    delta_k: int
    alpha_ref: float

    def __post_init__(self):
        if self.delta_k < 1:
            raise ValueError("step deadline must be at least one sample")
        if not 0.0 < self.alpha_ref < 1.0:
            raise ValueError("alpha_ref must lie in (0, 1)")


def gamma_to_alpha(gamma: float) -> float:
    """Per-step quadratic-Lyapunov decay equivalent to exponential rate gamma:
    alpha = 1 - e^{-2 gamma}, always in (0, 1)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 1.0 - math.exp(-2.0 * gamma)


def alpha_to_gamma(alpha: float) -> float:
    """Inverse of gamma_to_alpha: gamma = -ln(1 - alpha) / 2."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return -0.5 * math.log1p(-alpha)


def steps_within(delta_t: float, h: float) -> int:
    """Whole sampling steps of length h that fit inside the deadline."""
    return int(math.floor(delta_t / h + _FLOOR_NUDGE))


def alpha_ref(sor: Polytope, por: Polytope, delta_t: float, h: float) -> DecayTarget:
    """Minimum per-step decay that drags any boundary-of-SOR state inside the
    nearest-facet ball of the POR within floor(delta_t / h) steps.

    alpha_ref = 1 - (min ||x|| on POR boundary / max ||x|| on SOR boundary)^(2/delta_k)
    """
    if delta_t <= 0:
        raise ValueError("recovery deadline must be positive")
    for vertex in por.vertices():
        if not sor.contains_strictly(vertex):
            raise GeometryError("preferred region must lie strictly inside the safe region")
    delta_k = steps_within(delta_t, h)
    if delta_k < 1:
        raise DeadlineInfeasible(
            f"deadline {delta_t} s is shorter than the sampling period {h} s")
    min_por, _ = boundary_norm_extrema(por)
    _, max_sor = boundary_norm_extrema(sor)
    ratio = min_por / max_sor
    value = 1.0 - ratio ** (2.0 / delta_k)
    return DecayTarget(h=h, delta_k=delta_k, alpha_ref=value)
