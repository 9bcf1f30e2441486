"""Backup safe controller synthesis.

Assembles the semidefinite program that couples a timely-recovery LMI with
maximal inscribed-ellipsoid safety constraints, solves it through a conic
backend, and re-checks every returned certificate with plain linear algebra
independent of the solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .decay import DeadlineInfeasible, DecayTarget, alpha_ref
from .sysmodel import (DiscreteLoop, LinearPlant, Polytope, _as_array,
                       _check_sym_psd, discretize, spectral_radius)

DECAY_RESIDUAL_RTOL = 1e-7    # eigenvalue tolerance on the decay inequality
LEVEL_SLACK_TOL = 1e-9        # tolerance on level-set containment
ALPHA_SEARCH_RESOLUTION = 1e-3

_PREFERRED_SOLVERS = ("CLARABEL", "SCS")


def default_solver() -> str:
    installed = cp.installed_solvers()
    for name in _PREFERRED_SOLVERS:
        if name in installed:
            return name
    raise RuntimeError("no conic solver with PSD-cone support is installed")


class SynthesisInfeasible(Exception):
    """The synthesis SDP has no solution for the requested decay and period."""

    def __init__(self, message: str, h: float | None = None,
                 alpha: float | None = None, status: str | None = None):
        super().__init__(message)
        self.h = h
        self.alpha = alpha
        self.status = status


class SolverFailure(ArithmeticError):
    """The conic solver failed numerically or the result failed verification."""


class RiccatiError(ArithmeticError):
    """A Riccati fixed-point iteration did not converge."""


@dataclass
class SdpProblem:
    """Conic problem in the form the synthesis needs: symmetric/rectangular
    matrix variables, affine matrix expressions required PSD, second-order-cone
    rows, and an affine-plus-logdet objective to maximize."""

    variables: dict[str, cp.Variable] = field(default_factory=dict)
    psd_constraints: list = field(default_factory=list)
    soc_constraints: list = field(default_factory=list)  # (vector expr, scalar bound)
    objective: cp.Expression | None = None

    def merge(self, other: "SdpProblem") -> "SdpProblem":
        overlap = set(self.variables) & set(other.variables)
        for name in overlap:
            if self.variables[name] is not other.variables[name]:
                raise ValueError(f"conflicting definitions for variable {name!r}")
        self.variables.update(other.variables)
        self.psd_constraints.extend(other.psd_constraints)
        self.soc_constraints.extend(other.soc_constraints)
        if other.objective is not None:
            if self.objective is None:
                self.objective = other.objective
            else:
                self.objective = self.objective + other.objective
        return self

    def as_cvxpy(self) -> cp.Problem:
        constraints = [expr >> 0 for expr in self.psd_constraints]
        constraints += [cp.norm(vec, 2) <= bound for vec, bound in self.soc_constraints]
        objective = self.objective if self.objective is not None else cp.Constant(0.0)
        return cp.Problem(cp.Maximize(objective), constraints)

    def solve(self, solver: str | None = None) -> "SolverReport":
        problem = self.as_cvxpy()
        start = time.perf_counter()
        try:
            problem.solve(solver=solver or default_solver())
        except cp.SolverError as exc:
            return SolverReport("numerical-failure", float("nan"),
                                time.perf_counter() - start, float("nan"),
                                detail=str(exc))
        elapsed = time.perf_counter() - start
        status = _map_status(problem.status)
        residual = self.residual() if status == "optimal" else float("nan")
        value = problem.value if problem.value is not None else float("nan")
        return SolverReport(status, float(value), elapsed, residual,
                            detail=problem.status)

    def residual(self) -> float:
        """Scaled worst constraint violation at the variables' current values."""
        worst = 0.0
        for expr in self.psd_constraints:
            val = expr.value
            if val is None:
                return float("nan")
            sym = (val + val.T) / 2.0
            eigmin = np.linalg.eigvalsh(sym).min()
            worst = max(worst, max(0.0, -eigmin) / (1.0 + np.abs(sym).max()))
        for vec, bound in self.soc_constraints:
            v, s = vec.value, float(cp.Constant(bound).value if np.isscalar(bound)
                                    else bound.value)
            if v is None:
                return float("nan")
            worst = max(worst, max(0.0, np.linalg.norm(v) - s) / (1.0 + abs(s)))
        return worst


def _map_status(status: str | None) -> str:
    if status == cp.OPTIMAL:
        return "optimal"
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return "infeasible"
    return "numerical-failure"


@dataclass(frozen=True)
class SolverReport:
    """Outcome of one conic solve."""

    status: str  # optimal | infeasible | numerical-failure
    objective_value: float
    solve_time: float
    residuals: float
    detail: str | None = None


@dataclass(frozen=True)
class BackupController:
    """Verified backup gain: feedback matrix, its quadratic Lyapunov certificate
    (decay alpha per step of length h), and the safe invariant level set
    {x : x^T qlf x <= level} inscribed in the safe operating region."""

    gain: np.ndarray
    qlf: np.ndarray
    level: float
    alpha: float
    h: float
    wcet: float

    def __post_init__(self):
        object.__setattr__(self, "gain", _as_array(self.gain, "gain", 2))
        object.__setattr__(self, "qlf", _as_array(self.qlf, "qlf", 2))
        _check_sym_psd(self.qlf, "qlf", strict=True)
        if self.gain.shape[1] != self.qlf.shape[0]:
            raise ValueError("gain and qlf dimensions inconsistent")
        if self.level <= 0:
            raise ValueError("level must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.wcet < self.h:
            raise ValueError("execution time must satisfy 0 < wcet < h")

    @property
    def n_states(self) -> int:
        return self.qlf.shape[0]

    def lyapunov(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.qlf @ x)

    def barrier(self, x) -> float:
        """Safety barrier value: nonpositive exactly on the invariant set."""
        return self.lyapunov(x) - self.level

    def invariant_set(self):
        from .sysmodel import Ellipsoid
        return Ellipsoid(self.qlf, self.level, np.zeros(self.n_states))


def build_recovery_lmi(loop: DiscreteLoop, alpha: float, eps: float,
                       variables: dict[str, cp.Variable] | None = None) -> SdpProblem:
    """Timely-recovery fragment: with pbar the inverse Lyapunov matrix and
    z = gain @ pbar, require

        [[pbar, a pbar - b z], [(a pbar - b z)^T, (1 - alpha) pbar]] - eps I >= 0

    so feasibility implies a strictly contractive closed loop at rate alpha.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = loop.n_states
    p = loop.b.shape[1]
    if variables is None:
        variables = {}
    pbar = variables.setdefault("pbar", cp.Variable((n, n), symmetric=True, name="pbar"))
    z = variables.setdefault("z", cp.Variable((p, n), name="z"))
    closed = loop.a @ pbar - loop.b @ z
    block = cp.bmat([[pbar, closed], [closed.T, (1.0 - alpha) * pbar]])
    return SdpProblem(variables=variables,
                      psd_constraints=[block - eps * np.eye(2 * n)])


def build_safety_constraints(sor: Polytope,
                             variables: dict[str, cp.Variable] | None = None) -> SdpProblem:
    """Largest-inscribed-ellipsoid fragment: a symmetric factor ubar with
    {ubar u : ||u|| <= 1} inside the safe region and pbar >= ubar^2 through the
    coupling [[pbar, ubar], [ubar, I]] >= 0, plus one second-order-cone row per
    facet bounding the ellipsoid's support in the facet normal direction."""
    n = sor.dim
    if variables is None:
        variables = {}
    pbar = variables.setdefault("pbar", cp.Variable((n, n), symmetric=True, name="pbar"))
    ubar = variables.setdefault("ubar", cp.Variable((n, n), symmetric=True, name="ubar"))
    coupling = cp.bmat([[pbar, ubar], [ubar.T, np.eye(n)]])
    # Facets are stored relative to the center, so the center offset is already
    # folded into b_vec and the support bound is ||ubar a_j|| <= b_j.
    soc = [(ubar @ a, float(b)) for a, b in zip(sor.a_mat, sor.b_vec)]
    return SdpProblem(variables=variables, psd_constraints=[coupling],
                      soc_constraints=soc)


def recovery_block(loop: DiscreteLoop, alpha: float,
                   pbar: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Numeric value of the recovery LMI block at a candidate point (no solver)."""
    closed = loop.a @ pbar - loop.b @ z
    top = np.hstack([pbar, closed])
    bot = np.hstack([closed.T, (1.0 - alpha) * pbar])
    return np.vstack([top, bot])


def safety_facet_margins(sor: Polytope, ubar: np.ndarray) -> np.ndarray:
    """Per-facet slack b_j - ||ubar a_j|| of the inscribed-ellipsoid rows."""
    return sor.b_vec - np.linalg.norm(sor.a_mat @ ubar, axis=1)


def decay_residual(loop: DiscreteLoop, gain: np.ndarray, qlf: np.ndarray,
                   alpha: float) -> float:
    """Largest eigenvalue of (a - b K)^T P (a - b K) - (1 - alpha) P.

    Nonpositive (up to tolerance) iff the per-step decay certificate holds.
    """
    closed = loop.a - loop.b @ gain
    return float(np.linalg.eigvalsh(closed.T @ qlf @ closed - (1.0 - alpha) * qlf).max())


def calibrate_level_set(p_mat: np.ndarray, sor: Polytope) -> float:
    """Largest c with {x : (x - d)^T p_mat (x - d) <= c} inside the safe region.

    Closed form: the ellipsoid's support in facet direction a_j equals
    sqrt(c a_j^T p_mat^{-1} a_j), so c = min_j b_j^2 / (a_j^T p_mat^{-1} a_j).
    The result touches at least one facet and violates none.
    """
    p_mat = np.asarray(p_mat, dtype=float)
    sol = np.linalg.solve(p_mat, sor.a_mat.T)  # p_mat^{-1} a_j columnwise
    quad = np.einsum("ij,ji->i", sor.a_mat, sol)
    return float(np.min(sor.b_vec ** 2 / quad))


@dataclass(frozen=True)
class CertificateReport:
    """Solver-independent re-check of one backup controller."""

    decay_ok: bool
    containment_ok: bool
    schur_ok: bool
    decay_residual: float
    decay_tolerance: float
    level_margin: float
    spectral_radius: float

    @property
    def passed(self) -> bool:
        return self.decay_ok and self.containment_ok and self.schur_ok

    def as_dict(self) -> dict:
        return {
            "decay_ok": self.decay_ok,
            "containment_ok": self.containment_ok,
            "schur_ok": self.schur_ok,
            "decay_residual": self.decay_residual,
            "decay_tolerance": self.decay_tolerance,
            "level_margin": self.level_margin,
            "spectral_radius": self.spectral_radius,
            "passed": self.passed,
        }


def verify_certificate(bsc: BackupController, loop: DiscreteLoop,
                       sor: Polytope) -> CertificateReport:
    """Re-derive all three certificate facts with plain linear algebra:
    per-step decay, level-set containment in the safe region, Schur stability."""
    residual = decay_residual(loop, bsc.gain, bsc.qlf, bsc.alpha)
    tol = DECAY_RESIDUAL_RTOL * np.linalg.norm(bsc.qlf, 2)
    largest = calibrate_level_set(bsc.qlf, sor)
    rho = spectral_radius(loop.a - loop.b @ bsc.gain)
    return CertificateReport(
        decay_ok=bool(residual <= tol),
        containment_ok=bool(largest >= bsc.level - LEVEL_SLACK_TOL),
        schur_ok=bool(rho < 1.0),
        decay_residual=residual,
        decay_tolerance=float(tol),
        level_margin=float(largest - bsc.level),
        spectral_radius=rho,
    )


def _geometry_scale(sor: Polytope) -> float:
    """Squared-radius proxy for the solved matrices' magnitude, used to put the
    strictness shift eps on the problem's own scale."""
    dists = sor.b_vec / np.linalg.norm(sor.a_mat, axis=1)
    return float(np.median(dists ** 2))


def _solve_at_alpha(loop: DiscreteLoop, sor: Polytope, alpha: float,
                    eps_eff: float, solver: str | None):
    variables: dict[str, cp.Variable] = {}
    problem = build_recovery_lmi(loop, alpha, eps_eff, variables)
    problem.merge(build_safety_constraints(sor, variables))
    problem.objective = cp.log_det(variables["ubar"])
    report = problem.solve(solver=solver)
    if report.status != "optimal":
        return None, report
    pbar = np.asarray(variables["pbar"].value)
    pbar = (pbar + pbar.T) / 2.0
    qlf = np.linalg.inv(pbar)
    qlf = (qlf + qlf.T) / 2.0
    gain = np.asarray(variables["z"].value) @ qlf
    return (gain, qlf), report


def solve_bsc(loop: DiscreteLoop, sor: Polytope, target: DecayTarget,
              eps: float = 1e-6, alpha_search: str = "fixed",
              wcet: float = 0.005, solver: str | None = None) -> BackupController:
    """Synthesize one backup controller for the loop's sampling period.

    Maximizes the inscribed ellipsoid's log-volume subject to the recovery LMI
    at the target decay and the per-facet safety rows, recovers the gain and
    Lyapunov matrix, calibrates the invariant level set against the safe
    region, and verifies the certificate before returning.

    alpha_search:
        "fixed"     solve once at target.alpha_ref (the minimum required decay)
        "maximize"  bisect the decay upward over [alpha_ref, 1) to 1e-3
                    resolution, keeping the largest feasible value

    Raises SynthesisInfeasible when no controller exists at the requested decay
    and SolverFailure when the solver or the certificate re-check fails.
    """
    if alpha_search not in ("fixed", "maximize"):
        raise ValueError("alpha_search must be 'fixed' or 'maximize'")
    eps_eff = eps * _geometry_scale(sor)
    alpha = target.alpha_ref
    solution, report = _solve_at_alpha(loop, sor, alpha, eps_eff, solver)
    if solution is None:
        if report.status == "infeasible":
            raise SynthesisInfeasible(
                f"no controller meets decay {alpha:.4f} at period {loop.h} s",
                h=loop.h, alpha=alpha, status=report.status)
        raise SolverFailure(
            f"solver failed at period {loop.h} s ({report.detail}), "
            f"residuals={report.residuals}")

    if alpha_search == "maximize":
        lo, hi = alpha, 1.0
        while hi - lo > ALPHA_SEARCH_RESOLUTION:
            mid = 0.5 * (lo + hi)
            candidate, _ = _solve_at_alpha(loop, sor, mid, eps_eff, solver)
            if candidate is not None:
                lo, solution = mid, candidate
            else:
                hi = mid
        alpha = lo

    gain, qlf = solution
    level = calibrate_level_set(qlf, sor)
    # Rescale the certificate to a unit level set. The decay inequality is
    # invariant under scaling, and unit levels make the activation policy's
    # alpha * V comparisons meaningful across controllers (the solver's
    # Lyapunov scale is otherwise arbitrary).
    qlf = qlf / level
    bsc = BackupController(gain=gain, qlf=qlf, level=1.0, alpha=alpha,
                           h=loop.h, wcet=wcet)
    check = verify_certificate(bsc, loop, sor)
    if not check.passed:
        raise SolverFailure(
            f"certificate re-check failed at period {loop.h} s: {check.as_dict()}")
    return bsc


@dataclass(frozen=True)
class PeriodAttempt:
    """One row of the multi-rate feasibility sweep."""

    h: float
    status: str  # feasible | infeasible | deadline-infeasible | numerical-failure
    delta_k: int | None = None
    alpha_ref: float | None = None
    alpha: float | None = None
    detail: str | None = None


@dataclass(frozen=True)
class SweepResult:
    """Feasibility sweep over candidate periods m * h0 within [h0, h_max]."""

    controllers: list[BackupController]
    attempts: list[PeriodAttempt]
    advice: str | None = None


def sweep_periods(plant: LinearPlant, sor: Polytope, por: Polytope,
                  delta_t: float, h0: float, h_max: float,
                  eps: float = 1e-6, alpha_search: str = "fixed",
                  wcets=0.005, solver: str | None = None) -> SweepResult:
    """Attempt synthesis at every candidate period m * h0 up to h_max.

    Successes are returned sorted by period ascending. `wcets` is either one
    execution time for every period or a mapping {period_seconds: wcet}.
    """
    if h0 <= 0 or h_max < h0:
        raise ValueError("need 0 < h0 <= h_max")
    controllers: list[BackupController] = []
    attempts: list[PeriodAttempt] = []
    m = 1
    while m * h0 <= h_max * (1.0 + 1e-12):
        h = m * h0
        m += 1
        wcet = wcets.get(h, wcets.get("default", 0.005)) if isinstance(wcets, dict) else wcets
        try:
            target = alpha_ref(sor, por, delta_t, h)
        except DeadlineInfeasible as exc:
            attempts.append(PeriodAttempt(h=h, status="deadline-infeasible",
                                          detail=str(exc)))
            continue
        try:
            bsc = solve_bsc(discretize(plant, h), sor, target, eps=eps,
                            alpha_search=alpha_search, wcet=wcet, solver=solver)
        except SynthesisInfeasible as exc:
            attempts.append(PeriodAttempt(h=h, status="infeasible",
                                          delta_k=target.delta_k,
                                          alpha_ref=target.alpha_ref,
                                          detail=str(exc)))
            continue
        except SolverFailure as exc:
            attempts.append(PeriodAttempt(h=h, status="numerical-failure",
                                          delta_k=target.delta_k,
                                          alpha_ref=target.alpha_ref,
                                          detail=str(exc)))
            continue
        controllers.append(bsc)
        attempts.append(PeriodAttempt(h=h, status="feasible",
                                      delta_k=target.delta_k,
                                      alpha_ref=target.alpha_ref,
                                      alpha=bsc.alpha))
    advice = None
    if not controllers:
        advice = ("no feasible period in the requested range; extend the "
                  "recovery deadline (lowering the required decay) or refine "
                  "the base period")
    return SweepResult(controllers=controllers, attempts=attempts, advice=advice)


def _riccati_fixed_point(a: np.ndarray, b: np.ndarray, q: np.ndarray,
                         r: np.ndarray, tol: float = 1e-10,
                         max_iter: int = 10_000) -> np.ndarray:
    """Iterate the discrete Riccati map to its stabilizing fixed point."""
    s = q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            bsb = r + b.T @ s @ b
            try:
                gain_term = np.linalg.solve(bsb, b.T @ s @ a)
            except np.linalg.LinAlgError:
                gain_term = np.linalg.pinv(bsb) @ (b.T @ s @ a)
            s_next = q + a.T @ s @ a - a.T @ s @ b @ gain_term
            s_next = (s_next + s_next.T) / 2.0
            if not np.all(np.isfinite(s_next)):
                raise RiccatiError("Riccati iteration diverged; "
                                   "the pair is likely not stabilizable")
            if np.abs(s_next - s).max() <= tol * max(1.0, np.abs(s_next).max()):
                return s_next
            s = s_next
    raise RiccatiError(f"Riccati iteration did not converge in {max_iter} steps")


def synth_poc(loop: DiscreteLoop, q_cost: np.ndarray, r_cost: np.ndarray) -> np.ndarray:
    """Discrete LQR gain for the performance controller, via Riccati iteration."""
    q = np.asarray(q_cost, dtype=float)
    r = np.asarray(r_cost, dtype=float)
    _check_sym_psd(q, "q_cost", strict=True)
    _check_sym_psd(r, "r_cost", strict=True)
    s = _riccati_fixed_point(loop.a, loop.b, q, r)
    gain = np.linalg.solve(r + loop.b.T @ s @ loop.b, loop.b.T @ s @ loop.a)
    if spectral_radius(loop.a - loop.b @ gain) >= 1.0:
        raise RiccatiError("LQR closed loop is not Schur stable; "
                           "check stabilizability of (a, b)")
    return gain


def synth_kalman(loop: DiscreteLoop, c_out: np.ndarray, q_w: np.ndarray,
                 r_v: np.ndarray, tol: float = 1e-10,
                 max_iter: int = 10_000) -> np.ndarray:
    """Steady-state predictor gain L with xhat[k+1] = a xhat + b u + L(y - c xhat).

    Solves the dual Riccati fixed point for the prediction error covariance and
    returns L = a S c^T (c S c^T + r_v)^{-1}; (a - L c) is checked Schur stable.
    """
    c = np.asarray(c_out, dtype=float)
    q = np.asarray(q_w, dtype=float)
    r = np.asarray(r_v, dtype=float)
    s = q.copy()
    for _ in range(max_iter):
        csc = r + c @ s @ c.T
        try:
            innov = np.linalg.solve(csc, c @ s @ loop.a.T)
        except np.linalg.LinAlgError:
            innov = np.linalg.pinv(csc) @ (c @ s @ loop.a.T)
        s_next = q + loop.a @ s @ loop.a.T - loop.a @ s @ c.T @ innov
        s_next = (s_next + s_next.T) / 2.0
        if not np.all(np.isfinite(s_next)):
            raise RiccatiError("observer Riccati iteration diverged; "
                               "the pair is likely not detectable")
        if np.abs(s_next - s).max() <= tol * max(1.0, np.abs(s_next).max()):
            s = s_next
            break
        s = s_next
    else:
        raise RiccatiError(f"observer Riccati iteration did not converge "
                           f"in {max_iter} steps")
    csc = r + c @ s @ c.T
    try:
        gain = loop.a @ s @ c.T @ np.linalg.inv(csc)
    except np.linalg.LinAlgError:
        gain = loop.a @ s @ c.T @ np.linalg.pinv(csc)
    if spectral_radius(loop.a - gain @ c) >= 1.0:
        raise RiccatiError("observer closed loop is not Schur stable; "
                           "check detectability of (a, c)")
    return gain
