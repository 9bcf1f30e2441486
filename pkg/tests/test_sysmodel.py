"""Plant discretization and region geometry."""

import math

import numpy as np
import pytest

from bsckit.sysmodel import (DiscreteLoop, Ellipsoid, GeometryError,
                             LinearPlant, Polytope, boundary_norm_extrema,
                             contains, discretize, ellipsoid_contains)


def make_plant(phi, gamma):
    return LinearPlant.from_matrices(phi, gamma)


def test_discretize_zero_dynamics():
    plant = make_plant(np.zeros((2, 2)), [[1.0], [0.0]])
    loop = discretize(plant, 0.1)
    assert np.allclose(loop.a, np.eye(2), atol=1e-15)
    assert np.allclose(loop.b, [[0.1], [0.0]], atol=1e-15)


def test_discretize_nilpotent_exact():
    plant = make_plant([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])
    loop = discretize(plant, 0.5)
    assert np.allclose(loop.a, [[1.0, 0.5], [0.0, 1.0]], atol=1e-14)
    assert np.allclose(loop.b, [[0.125], [0.5]], atol=1e-14)


def _quadrature_b(phi, gamma, h, steps=10_000):
    """Independent oracle: midpoint quadrature of the input-to-state integral."""
    from scipy.linalg import expm
    dt = h / steps
    total = np.zeros_like(gamma)
    for k in range(steps):
        t = (k + 0.5) * dt
        total += expm(phi * t) @ gamma * dt
    return total


def test_discretize_scalar_closed_form_and_quadrature():
    plant = make_plant([[-1.0]], [[1.0]])
    loop = discretize(plant, 0.2)
    assert math.isclose(loop.a[0, 0], math.exp(-0.2), rel_tol=1e-12)
    assert math.isclose(loop.b[0, 0], 1.0 - math.exp(-0.2), rel_tol=1e-12)
    oracle = _quadrature_b(plant.phi, plant.gamma, 0.2)
    assert abs(loop.b[0, 0] - oracle[0, 0]) < 1e-8


def _integrate_columns(phi, h, substeps=10_000):
    """Column-wise RK4 integration of xdot = phi x, the state-transition oracle."""
    n = phi.shape[0]
    dt = h / substeps
    cols = np.eye(n)
    for _ in range(substeps):
        k1 = phi @ cols
        k2 = phi @ (cols + 0.5 * dt * k1)
        k3 = phi @ (cols + 0.5 * dt * k2)
        k4 = phi @ (cols + dt * k3)
        cols = cols + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return cols


def test_discretize_matches_integration_oracle(rng):
    for n in (2, 3, 4):
        raw = rng.standard_normal((n, n))
        phi = raw - (np.abs(np.linalg.eigvals(raw).real).max() + 0.5) * np.eye(n)
        plant = make_plant(phi, rng.standard_normal((n, 1)))
        h = 0.2
        loop = discretize(plant, h)
        oracle = _integrate_columns(phi, h)
        rel = np.linalg.norm(loop.a - oracle) / np.linalg.norm(loop.a)
        assert rel < 1e-8


def test_discretize_semigroup(rng):
    for _ in range(5):
        phi = rng.standard_normal((3, 3))
        phi = phi - (np.abs(np.linalg.eigvals(phi).real).max() + 0.2) * np.eye(3)
        plant = make_plant(phi, rng.standard_normal((3, 2)))
        one = discretize(plant, 0.07)
        two = discretize(plant, 0.14)
        rel = np.linalg.norm(two.a - one.a @ one.a) / np.linalg.norm(two.a)
        assert rel < 1e-9


def test_discretize_rejects_bad_period():
    plant = make_plant(np.zeros((1, 1)), [[1.0]])
    with pytest.raises(ValueError):
        discretize(plant, 0.0)


def test_box_extrema_examples():
    assert boundary_norm_extrema(Polytope.box([-1, -1], [1, 1])) == \
        pytest.approx((1.0, math.sqrt(2.0)))
    assert boundary_norm_extrema(Polytope.box([-2, -1], [2, 1])) == \
        pytest.approx((1.0, math.sqrt(5.0)))
    assert boundary_norm_extrema(Polytope.box([-0.5] * 4, [0.5] * 4)) == \
        pytest.approx((0.5, 1.0))


def test_box_extrema_enumeration_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(1, 5))
        hw = rng.uniform(0.2, 3.0, size=n)
        poly = Polytope.box(-hw, hw)
        min_norm, max_norm = boundary_norm_extrema(poly)
        assert min_norm == pytest.approx(hw.min(), abs=0.0)
        assert max_norm == pytest.approx(np.linalg.norm(hw), rel=1e-15)


def test_box_extrema_asymmetric_relative_to_center():
    # center at the origin, not the box midpoint
    poly = Polytope.box([-0.12, -0.5], [0.36, 0.5])
    min_norm, max_norm = boundary_norm_extrema(poly)
    assert min_norm == pytest.approx(0.12)
    assert max_norm == pytest.approx(math.hypot(0.36, 0.5))


def test_contains_examples():
    box = Polytope.box([-1, -1], [1, 1])
    assert contains(box, [0.0, 0.0])
    assert not contains(box, [1.0000001, 0.0])
    ball = Ellipsoid(np.eye(2), 4.0, np.zeros(2))
    assert ellipsoid_contains(ball, [0.0, 2.0])  # boundary counts as inside
    assert not ellipsoid_contains(ball, [0.0, 2.001])


def test_polytope_invariants():
    with pytest.raises(GeometryError):
        Polytope(np.array([[0.0, 0.0]]), np.array([1.0]), np.zeros(2))
    with pytest.raises(GeometryError):
        # center on a facet is not interior
        Polytope(np.array([[1.0, 0.0]]), np.array([0.0]), np.zeros(2))
    with pytest.raises(GeometryError):
        Polytope.box([0.0, 0.0], [1.0, 1.0])  # zero center not inside


def test_vertices_box_only():
    halfspace = Polytope(np.array([[1.0, 1.0]]), np.array([1.0]), np.zeros(2))
    with pytest.raises(GeometryError):
        halfspace.vertices()
    box = Polytope.box([-1, -2], [1, 2])
    assert sorted(map(tuple, box.vertices())) == [
        (-1.0, -2.0), (-1.0, 2.0), (1.0, -2.0), (1.0, 2.0)]


def test_box_bounds_recovered_from_general_h_rep():
    a_mat = np.array([[2.0, 0.0], [0.0, 1.0], [-2.0, 0.0], [0.0, -1.0]])
    b_vec = np.array([2.0, 1.5, 2.0, 1.5])
    poly = Polytope(a_mat, b_vec, np.zeros(2))
    lo, hi = poly.box_bounds()
    assert np.allclose(lo, [-1.0, -1.5])
    assert np.allclose(hi, [1.0, 1.5])


def test_ellipsoid_validation():
    with pytest.raises(ValueError):
        Ellipsoid(np.array([[1.0, 0.5], [0.4, 1.0]]), 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        Ellipsoid(-np.eye(2), 1.0, np.zeros(2))
    with pytest.raises(GeometryError):
        Ellipsoid(np.eye(2), 0.0, np.zeros(2))


def test_ellipsoid_boundary_points_lie_on_surface(rng):
    p = np.array([[2.0, 0.3], [0.3, 1.0]])
    e = Ellipsoid(p, 2.5, np.array([0.1, -0.2]))
    pts = e.boundary_points(500, rng)
    vals = [e.value(x) for x in pts]
    assert np.allclose(vals, 2.5, rtol=1e-10)


def test_types_are_immutable():
    plant = make_plant(np.zeros((2, 2)), [[1.0], [0.0]])
    with pytest.raises(ValueError):
        plant.phi[0, 0] = 1.0
    box = Polytope.box([-1, -1], [1, 1])
    with pytest.raises(ValueError):
        box.b_vec[0] = 5.0


def test_poc_gain_must_stabilize():
    with pytest.raises(ValueError):
        DiscreteLoop(np.array([[2.0]]), np.array([[0.0]]), 0.1,
                     poc_gain=np.array([[1.0]]))
    loop = DiscreteLoop(np.array([[2.0]]), np.array([[1.0]]), 0.1,
                        poc_gain=np.array([[1.5]]))
    assert loop.poc_gain is not None
