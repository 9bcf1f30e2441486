"""Continuous plants, zero-order-hold discretizations, and operating-region geometry.

State vectors live in deviation coordinates (plant state minus equilibrium), so
every region here is described relative to its own center point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

_SYM_TOL = 1e-9
_CONTAIN_TOL = 1e-12


class GeometryError(ValueError):
    """A polytope or ellipsoid violates a geometric precondition."""


class NumericFailure(ArithmeticError):
    """A numerical routine produced non-finite values."""


def _as_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericFailure(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


def _check_sym_psd(mat: np.ndarray, name: str, strict: bool = False) -> None:
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    scale = max(1.0, np.abs(mat).max())
    if np.abs(mat - mat.T).max() > _SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric within tolerance")
    eigmin = np.linalg.eigvalsh(mat).min()
    if strict:
        if eigmin <= 0.0:
            raise ValueError(f"{name} is not positive definite (min eig {eigmin:.3e})")
    elif eigmin < -_SYM_TOL * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eig {eigmin:.3e})")


@dataclass(frozen=True)
class LinearPlant:
    """Continuous-time linearized dynamics with noise covariances.

    xdot = phi x + gamma u + w,  y = c_out x + v, with w ~ N(0, q_w) and
    v ~ N(0, r_v). x_ref/u_ref record the equilibrium the linearization was
    taken at; all internal computation uses deviations from it.
    """

    phi: np.ndarray
    gamma: np.ndarray
    c_out: np.ndarray
    q_w: np.ndarray
    r_v: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", _as_array(self.phi, "phi", 2))
        object.__setattr__(self, "gamma", _as_array(self.gamma, "gamma", 2))
        object.__setattr__(self, "c_out", _as_array(self.c_out, "c_out", 2))
        object.__setattr__(self, "q_w", _as_array(self.q_w, "q_w", 2))
        object.__setattr__(self, "r_v", _as_array(self.r_v, "r_v", 2))
        object.__setattr__(self, "x_ref", _as_array(self.x_ref, "x_ref", 1))
        object.__setattr__(self, "u_ref", _as_array(self.u_ref, "u_ref", 1))
        n = self.phi.shape[0]
        m = self.c_out.shape[0]
        if self.phi.shape != (n, n):
            raise ValueError("phi must be square")
        if self.gamma.shape[0] != n:
            raise ValueError("gamma row count must match state dimension")
        if self.c_out.shape[1] != n:
            raise ValueError("c_out column count must match state dimension")
        if self.q_w.shape != (n, n) or self.r_v.shape != (m, m):
            raise ValueError("noise covariance shapes inconsistent with plant")
        if self.x_ref.shape != (n,) or self.u_ref.shape != (self.gamma.shape[1],):
            raise ValueError("equilibrium vector shapes inconsistent with plant")
        _check_sym_psd(self.q_w, "q_w")
        _check_sym_psd(self.r_v, "r_v")

    @classmethod
    def from_matrices(cls, phi, gamma, c_out=None, q_w=None, r_v=None,
                      x_ref=None, u_ref=None) -> "LinearPlant":
        """Build a plant, filling unspecified pieces with conventional defaults
        (full-state output, 1e-6 I covariances, zero equilibrium)."""
        phi = np.asarray(phi, dtype=float)
        gamma = np.asarray(gamma, dtype=float)
        n = phi.shape[0]
        if c_out is None:
            c_out = np.eye(n)
        c_out = np.asarray(c_out, dtype=float)
        m = c_out.shape[0]
        if q_w is None:
            q_w = 1e-6 * np.eye(n)
        if r_v is None:
            r_v = 1e-6 * np.eye(m)
        if x_ref is None:
            x_ref = np.zeros(n)
        if u_ref is None:
            u_ref = np.zeros(gamma.shape[1])
        return cls(phi, gamma, c_out, q_w, r_v, x_ref, u_ref)

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.gamma.shape[1]


@dataclass(frozen=True)
class DiscreteLoop:
    """One sampling-period view of a plant: a = e^{phi h}, b = int_0^h e^{phi t} gamma dt."""

    a: np.ndarray
    b: np.ndarray
    h: float
    poc_gain: np.ndarray | None = None
    kalman_gain: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", _as_array(self.a, "a", 2))
        object.__setattr__(self, "b", _as_array(self.b, "b", 2))
        if self.h <= 0:
            raise ValueError("sampling period must be positive")
        n = self.a.shape[0]
        if self.a.shape != (n, n) or self.b.shape[0] != n:
            raise ValueError("a/b shapes inconsistent")
        if self.poc_gain is not None:
            k = _as_array(self.poc_gain, "poc_gain", 2)
            object.__setattr__(self, "poc_gain", k)
            if k.shape != (self.b.shape[1], n):
                raise ValueError("poc_gain shape inconsistent with loop")
            rho = spectral_radius(self.a - self.b @ k)
            if rho >= 1.0:
                raise ValueError(f"poc_gain does not stabilize the loop (rho={rho:.6f})")
        if self.kalman_gain is not None:
            object.__setattr__(self, "kalman_gain",
                               _as_array(self.kalman_gain, "kalman_gain", 2))

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    def with_gains(self, poc_gain=None, kalman_gain=None) -> "DiscreteLoop":
        return DiscreteLoop(self.a, self.b, self.h,
                            poc_gain if poc_gain is not None else self.poc_gain,
                            kalman_gain if kalman_gain is not None else self.kalman_gain)


@dataclass(frozen=True)
class Polytope:
    """Bounded H-representation {x : a_mat (x - center) <= b_vec} with interior center.

    Benchmark regions are axis-aligned boxes; vertex enumeration is supported
    only when the facets form such a box (2^n corners).
    """

    a_mat: np.ndarray
    b_vec: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_mat", _as_array(self.a_mat, "a_mat", 2))
        object.__setattr__(self, "b_vec", _as_array(self.b_vec, "b_vec", 1))
        object.__setattr__(self, "center", _as_array(self.center, "center", 1))
        if self.a_mat.shape[0] != self.b_vec.shape[0]:
            raise GeometryError("facet count mismatch between a_mat and b_vec")
        if self.a_mat.shape[1] != self.center.shape[0]:
            raise GeometryError("facet normals and center dimension mismatch")
        norms = np.linalg.norm(self.a_mat, axis=1)
        if np.any(norms == 0.0):
            raise GeometryError("every facet normal must be nonzero")
        if np.any(self.b_vec <= 0.0):
            raise GeometryError("center must lie strictly inside the polytope")

    @classmethod
    def box(cls, lo, hi, center=None) -> "Polytope":
        """Axis-aligned box [lo, hi], described relative to `center`
        (default: the zero vector, i.e. the equilibrium point)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError("lo/hi must be 1-d vectors of equal length")
        if np.any(hi <= lo):
            raise GeometryError("box requires lo < hi componentwise")
        n = lo.shape[0]
        if center is None:
            center = np.zeros(n)
        center = np.asarray(center, dtype=float)
        a_mat = np.vstack([np.eye(n), -np.eye(n)])
        b_vec = np.hstack([hi - center, center - lo])
        return cls(a_mat, b_vec, center)

    @property
    def dim(self) -> int:
        return self.a_mat.shape[1]

    @property
    def n_facets(self) -> int:
        return self.a_mat.shape[0]

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Recover (lo, hi) in absolute coordinates if the facets form an
        axis-aligned box covering every axis direction; None otherwise."""
        n = self.dim
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for a, b in zip(self.a_mat, self.b_vec):
            nz = np.nonzero(a)[0]
            if nz.size != 1:
                return None
            i = nz[0]
            offset = b / a[i] + self.center[i]
            if a[i] > 0:
                hi[i] = min(hi[i], offset)
            else:
                lo[i] = max(lo[i], offset)
        if np.any(np.isinf(lo)) or np.any(np.isinf(hi)):
            return None
        return lo, hi

    def vertices(self) -> np.ndarray:
        """Corner points, available for axis-aligned boxes only."""
        bounds = self.box_bounds()
        if bounds is None:
            raise GeometryError(
                "vertex enumeration is supported only for axis-aligned boxes")
        lo, hi = bounds
        corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
        return corners

    def slacks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.b_vec - self.a_mat @ (x - self.center)

    def contains(self, x, tol: float = _CONTAIN_TOL) -> bool:
        return bool(np.all(self.slacks(x) >= -tol))

    def contains_strictly(self, x) -> bool:
        return bool(np.all(self.slacks(x) > 0.0))


@dataclass(frozen=True)
class Ellipsoid:
    """Quadratic level set {x : (x - center)^T p_mat (x - center) <= level}."""

    p_mat: np.ndarray
    level: float
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_mat", _as_array(self.p_mat, "p_mat", 2))
        object.__setattr__(self, "center", _as_array(self.center, "center", 1))
        _check_sym_psd(self.p_mat, "p_mat", strict=True)
        if self.p_mat.shape[0] != self.center.shape[0]:
            raise GeometryError("p_mat and center dimension mismatch")
        if self.level <= 0.0:
            raise GeometryError("level must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def value(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.center
        return float(d @ self.p_mat @ d)

    def contains(self, x, tol: float = _CONTAIN_TOL) -> bool:
        return self.value(x) <= self.level + tol

    def support_width(self, direction) -> float:
        """max over the ellipsoid of direction^T (x - center)."""
        a = np.asarray(direction, dtype=float)
        return float(np.sqrt(self.level * (a @ np.linalg.solve(self.p_mat, a))))

    def boundary_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Sample `count` points on the level surface (rows)."""
        n = self.dim
        u = rng.standard_normal((count, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        chol = np.linalg.cholesky(self.p_mat)
        # x = center + sqrt(level) L^{-T} u maps the unit sphere onto the surface
        pts = np.sqrt(self.level) * np.linalg.solve(chol.T, u.T).T
        return pts + self.center


def discretize(plant: LinearPlant, h: float) -> DiscreteLoop:
    """Exact zero-order-hold discretization via the augmented matrix exponential.

    expm(h [[phi, gamma], [0, 0]]) packs a = e^{phi h} in the top-left block and
    b = int_0^h e^{phi t} gamma dt in the top-right block.
    """
    if h <= 0:
        raise ValueError("sampling period must be positive")
    n = plant.n_states
    p = plant.n_inputs
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = plant.phi
    aug[:n, n:] = plant.gamma
    big = expm(aug * h)
    if not np.all(np.isfinite(big)):
        raise NumericFailure("matrix exponential produced non-finite entries")
    return DiscreteLoop(big[:n, :n], big[:n, n:], h)


def boundary_norm_extrema(poly: Polytope) -> tuple[float, float]:
    """(min, max) Euclidean distance from the center to the polytope boundary.

    The minimum is the distance to the nearest facet hyperplane; the maximum is
    the farthest vertex (exact for boxes, which is all the benchmarks use).
    """
    dists = poly.b_vec / np.linalg.norm(poly.a_mat, axis=1)
    min_norm = float(dists.min())
    verts = poly.vertices()
    max_norm = float(np.linalg.norm(verts - poly.center, axis=1).max())
    return min_norm, max_norm


def contains(poly: Polytope, x, tol: float = _CONTAIN_TOL) -> bool:
    return poly.contains(x, tol)


def ellipsoid_contains(e: Ellipsoid, x, tol: float = _CONTAIN_TOL) -> bool:
    return e.contains(x, tol)


def spectral_radius(mat: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(mat)).max())
