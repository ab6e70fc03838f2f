import math

import numpy as np
import pytest

import polytope_geom as geom
from errors import GeometryError
from polytope_geom import Polytope, Zonotope


def _sample_inside(p, rng, count, spread):
    points = []
    while len(points) < count:
        u = rng.uniform(-spread, spread, size=p.dim)
        if p.contains(u, tol=0.0):
            points.append(u)
    return np.array(points)


# --- Inscribed radius ---

def test_unit_cube_has_unit_inscribed_radius():
    assert geom.inscribed_sphere_radius(Polytope.symmetric_box([1.0, 1.0, 1.0])) == pytest.approx(1.0)


def test_octahedron_inscribed_radius():
    vertices = np.vstack([np.eye(3), -np.eye(3)])
    octahedron = geom.hrep_from_vertices(vertices)
    assert octahedron.H.shape[0] == 8
    np.testing.assert_allclose(np.linalg.norm(octahedron.H, axis=1), 1.0)
    assert geom.inscribed_sphere_radius(octahedron) == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)


def test_radius_requires_origin_inside():
    with pytest.raises(GeometryError):
        geom.inscribed_sphere_radius(Polytope.box([0.5, 0.5], [1.0, 1.0]))


def test_radius_matches_sampled_ray_distances(rng):
    H = rng.normal(size=(20, 3))
    p = Polytope(H, rng.uniform(0.5, 2.0, size=20))
    directions = rng.normal(size=(100_000, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    reach = directions @ p.H.T
    with np.errstate(divide="ignore"):
        ray = np.where(reach > 0.0, p.b / reach, np.inf).min(axis=1)
    radius = geom.inscribed_sphere_radius(p)
    assert ray.min() >= radius - 1e-12
    assert ray.min() == pytest.approx(radius, rel=1e-2)


def test_zonotope_radius_ignores_attitude(rng):
    G = rng.normal(size=(3, 6))
    mu_min, mu_max = np.full(6, -0.5), np.ones(6)

    def radius(generators):
        z = Zonotope(generators, mu_min, mu_max)
        return geom.inscribed_sphere_radius(geom.hrep_from_vertices(geom.zonotope_vertices(z)))

    base = radius(G)
    for _ in range(5):
        Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
        Q = Q * np.sign(np.diag(R))
        if np.linalg.det(Q) < 0:
            Q[:, 0] = -Q[:, 0]
        assert radius(Q @ G) == pytest.approx(base, abs=1e-9)


@pytest.mark.parametrize("shape", ["cube", "icosahedron"])
def test_inscribed_polytope_vertices_sit_on_the_sphere(shape):
    p = geom.inscribed_polytope(2.0, shape)
    np.testing.assert_allclose(np.linalg.norm(p.vertices(), axis=1), 2.0, atol=1e-9)


def test_inscribed_shape_is_checked():
    with pytest.raises(GeometryError):
        geom.inscribed_vertices(1.0, "dodecahedron")
    with pytest.raises(GeometryError):
        geom.inscribed_vertices(0.0, "cube")


def test_degenerate_hull_is_reported():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(GeometryError):
        geom.hrep_from_vertices(flat)


# --- Zonotopes and allocation ---

def test_zonotope_vertices_cover_the_thrust_box():
    z = Zonotope(np.array([[1.0, 0.0], [0.0, 2.0]]), [-1.0, 0.0], [1.0, 1.0])
    vertices = geom.zonotope_vertices(z)
    expected = {(-1.0, 0.0), (1.0, 0.0), (-1.0, 2.0), (1.0, 2.0)}
    assert {tuple(v) for v in np.round(vertices, 12)} == expected


def test_zonotope_rejects_inverted_bounds():
    with pytest.raises(GeometryError):
        Zonotope(np.eye(2), [1.0, 0.0], [0.0, 1.0])


def test_planar_effective_set_is_achievable():
    thrusters = []
    for sign in (-1.0, 1.0):
        thrusters.append({"position": [0.0, sign * 0.1, 0.0], "direction": [1.0, 0.0, 0.0]})
        thrusters.append({"position": [0.0, sign * 0.1, 0.0], "direction": [-1.0, 0.0, 0.0]})
        thrusters.append({"position": [sign * 0.1, 0.0, 0.0], "direction": [0.0, 1.0, 0.0]})
        thrusters.append({"position": [sign * 0.1, 0.0, 0.0], "direction": [0.0, -1.0, 0.0]})
    G = geom.allocation_matrix(thrusters)
    assert G.shape == (6, 8)
    mu_min, mu_max = np.zeros(8), np.full(8, 0.5)

    U = geom.effective_input_set(G, mu_min, mu_max, planar=True)
    assert U.dim == 3
    assert U.origin_interior()

    force, torque = geom.block_zonotopes(G, mu_min, mu_max, (0, 1), (5,))
    force_hull = geom.hrep_from_vertices(geom.zonotope_vertices(force))
    torque_hull = geom.hrep_from_vertices(geom.zonotope_vertices(torque))
    for v in U.vertices():
        assert force_hull.contains(v[:2], tol=1e-9)
        assert torque_hull.contains(v[2:], tol=1e-9)


# --- Tightening ---

def test_tightened_points_absorb_every_disturbance(rng):
    U = geom.inscribed_polytope(3.0, "icosahedron")
    K = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.1], [0.1, 0.0, 1.0]])
    d_bar = np.array([0.4, 0.3, 0.2])
    alpha = 1.5
    tight = geom.tighten(U, K, d_bar, alpha)
    violations = 0
    for u in _sample_inside(tight, rng, 200, 3.0):
        for _ in range(20):
            d = rng.uniform(-d_bar, d_bar)
            violations += not U.contains(u + alpha * K @ d, tol=1e-12)
        corner = np.sign(rng.normal(size=3)) * d_bar
        violations += not U.contains(u + alpha * K @ corner, tol=1e-12)
    assert violations == 0


def test_tightening_shift_is_exact_for_coupled_gain():
    U = Polytope.symmetric_box([1.0, 1.0])
    K = np.array([[1.0, 0.5], [0.5, 1.0]])
    d_bar = np.array([0.2, 0.2])
    np.testing.assert_allclose(geom.tightening_coefficients(U, K, d_bar), [0.3] * 4)
    tight = geom.tighten(U, K, d_bar, 1.0)
    corner = np.array([0.7, 0.7])
    assert tight.contains(corner, tol=1e-12)
    assert U.contains(corner + K @ d_bar, tol=1e-12)
    assert not U.contains(corner + 1e-6 + K @ d_bar, tol=1e-12)


def _random_instance(rng):
    axes = np.vstack([np.eye(3), -np.eye(3)]) * rng.uniform(1.5, 3.0, size=(6, 1))
    points = rng.normal(size=(14, 3))
    points *= rng.uniform(1.5, 3.0, size=(14, 1)) / np.linalg.norm(points, axis=1, keepdims=True)
    U = geom.hrep_from_vertices(np.vstack([axes, points]))
    K = np.eye(3) + 0.2 * rng.uniform(-1.0, 1.0, size=(3, 3))
    return U, K, rng.uniform(0.05, 0.2, size=3)


def test_tightening_membership_over_random_instances(rng):
    for _ in range(5):
        U, K, d_bar = _random_instance(rng)
        tight = geom.tighten(U, K, d_bar, 1.0)
        for _ in range(1000):
            u = rng.uniform(-3.0, 3.0, size=3)
            u *= tight.scale_to_boundary(u) * rng.uniform()
            moved = u + rng.uniform(-d_bar, d_bar, size=(100, 3)) @ K.T
            assert np.all(moved @ U.H.T <= U.b + 1e-12)


def test_tightening_is_monotone_in_alpha(rng):
    U, K, d_bar = _random_instance(rng)
    offsets = [geom.tighten(U, K, d_bar, alpha).b for alpha in (0.0, 0.5, 1.0, 2.0, 4.0)]
    np.testing.assert_array_equal(offsets[0], U.b)
    for looser, tighter in zip(offsets, offsets[1:]):
        assert np.all(tighter <= looser)


def test_alpha_max_for_box():
    U = Polytope.symmetric_box([1.0])
    assert geom.alpha_max_for_zero_input(U, np.eye(1), [0.25]) == pytest.approx(4.0)
    assert geom.alpha_max_for_zero_input(U, np.eye(1), [0.0]) == math.inf


def test_disturbance_corner_check():
    U = Polytope.symmetric_box([1.0, 1.0])
    assert geom.can_cancel_disturbance(U, np.eye(2), [0.25, 0.5])
    assert not geom.can_cancel_disturbance(U, np.eye(2), [2.0, 0.5])


def test_tightening_argument_checks():
    U = Polytope.symmetric_box([1.0, 1.0])
    with pytest.raises(GeometryError):
        geom.tighten(U, np.eye(2), [0.1, 0.1], -1.0)
    with pytest.raises(GeometryError):
        geom.tighten(U, np.zeros((2, 2)), [0.1, 0.1], 1.0)
    with pytest.raises(GeometryError):
        geom.tighten(U, np.eye(3), [0.1, 0.1, 0.1], 1.0)


# --- Polytope helpers ---

def test_scale_to_boundary_and_violation():
    U = Polytope.symmetric_box([1.0, 2.0])
    assert U.scale_to_boundary([2.0, 0.0]) == pytest.approx(0.5)
    assert U.scale_to_boundary([0.5, 0.5]) == 1.0
    assert U.violation([1.5, 0.0]) == pytest.approx(0.5)
    assert U.violation([0.0, 0.0]) == pytest.approx(-1.0)


def test_zero_rows_are_rejected():
    with pytest.raises(GeometryError):
        Polytope(np.array([[0.0, 0.0]]), np.array([1.0]))


def test_product_stacks_blocks():
    p = Polytope.symmetric_box([1.0]).product(Polytope.symmetric_box([2.0, 3.0]))
    assert p.dim == 3
    assert p.contains([1.0, -2.0, 3.0])
    assert not p.contains([0.0, 0.0, 3.1])
