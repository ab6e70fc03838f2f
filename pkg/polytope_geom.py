"""Wrench-set geometry: zonotopes, H-representations, inscribed sets, tightening.

Forces and torques are handled as independent blocks. Each block goes
through zonotope vertices -> convex hull -> origin-centred inscribed radius
-> inscribed polytope, and the blocks are stacked into one input set.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag
from scipy.spatial import ConvexHull, QhullError

from errors import GeometryError

logger = logging.getLogger(__name__)

MAX_GENERATORS = 16
FACET_TOL = 1e-8
VERTEX_TOL = 1e-9
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True, eq=False)
class Zonotope:
    """{G mu : mu_min <= mu <= mu_max}; columns of G are unit-thrust directions."""

    G: np.ndarray
    mu_min: np.ndarray
    mu_max: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        lo = np.asarray(self.mu_min, dtype=float).ravel()
        hi = np.asarray(self.mu_max, dtype=float).ravel()
        if G.shape[1] != lo.size or lo.size != hi.size:
            raise GeometryError("generator count must match the thrust bound length")
        if np.any(lo > hi):
            raise GeometryError("mu_min must not exceed mu_max")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "mu_min", lo)
        object.__setattr__(self, "mu_max", hi)


@dataclass(frozen=True, eq=False)
class Polytope:
    """{u : H u <= b}."""

    H: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if H.shape[0] != b.size:
            raise GeometryError("H and b have different row counts")
        if np.any(np.linalg.norm(H, axis=1) == 0.0):
            raise GeometryError("H has a zero row")
        H.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.H.shape[1]

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        if lower.size != upper.size or np.any(lower > upper):
            raise GeometryError("box bounds must have equal length and lower <= upper")
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @classmethod
    def symmetric_box(cls, bound):
        bound = np.asarray(bound, dtype=float).ravel()
        return cls.box(-bound, bound)

    def product(self, other):
        """Cartesian product; the result acts on [u_self, u_other]."""
        return Polytope(block_diag(self.H, other.H), np.concatenate([self.b, other.b]))

    def origin_interior(self):
        return bool(np.all(self.b > 0.0))

    def contains(self, u, tol=1e-9):
        u = np.asarray(u, dtype=float)
        return bool(np.all(self.H @ u <= self.b + tol))

    def violation(self, u):
        """Worst signed constraint violation (positive means outside)."""
        return float(np.max(self.H @ np.asarray(u, dtype=float) - self.b))

    def scale_to_boundary(self, u):
        """Largest lambda in [0, 1] with lambda * u inside; the origin must be inside."""
        if not self.origin_interior():
            raise GeometryError("radial scaling needs the origin strictly inside")
        Hu = self.H @ np.asarray(u, dtype=float)
        ratios = np.where(Hu > 0.0, self.b / np.where(Hu > 0.0, Hu, 1.0), np.inf)
        return float(min(1.0, ratios.min()))

    def vertices(self):
        """Vertex enumeration by intersecting facet triples (small dimensions only)."""
        n = self.dim
        points = []
        for rows in itertools.combinations(range(self.H.shape[0]), n):
            A = self.H[list(rows)]
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            v = np.linalg.solve(A, self.b[list(rows)])
            if self.contains(v, tol=1e-9):
                points.append(v)
        return _dedup_rows(np.array(points)) if points else np.empty((0, n))

    def to_dict(self):
        return {"H": self.H.tolist(), "b": self.b.tolist()}


def _dedup_rows(points, tol=VERTEX_TOL):
    keep = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in keep):
            keep.append(p)
    return np.array(keep)


def zonotope_vertices(z):
    """Images of all 2^m corners of the thrust box, deduplicated."""
    m = z.G.shape[1]
    if m > MAX_GENERATORS:
        raise GeometryError(f"{m} generators is too many for 2^m corner enumeration (max {MAX_GENERATORS})")
    corners = np.array(list(itertools.product(*zip(z.mu_min, z.mu_max))), dtype=float)
    return _dedup_rows(corners @ z.G.T)


def hrep_from_vertices(vertices):
    """Facets of the convex hull with unit-length normals."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    d = V.shape[1]
    if d == 1:
        lo, hi = V.min(), V.max()
        if hi - lo <= VERTEX_TOL:
            raise GeometryError("degenerate hull: 1-D vertex set is a single point")
        return Polytope(np.array([[1.0], [-1.0]]), np.array([hi, -lo]))
    try:
        hull = ConvexHull(V)
    except (QhullError, ValueError) as e:
        raise GeometryError(f"degenerate hull: vertices do not span {d} dimensions ({e})") from e

    facets = []
    for eq in hull.equations:
        h = eq[:-1]
        norm = np.linalg.norm(h)
        h, off = h / norm, eq[-1] / norm
        row = np.concatenate([h, [-off]])
        if not any(np.max(np.abs(row - f)) <= FACET_TOL for f in facets):
            facets.append(row)
    facets = np.array(facets)
    return Polytope(facets[:, :-1], facets[:, -1])


def inscribed_sphere_radius(p):
    """Radius of the largest origin-centred ball inside p: min b_i / |h_i|."""
    if not p.origin_interior():
        raise GeometryError("origin is not strictly inside the polytope")
    return float(np.min(p.b / np.linalg.norm(p.H, axis=1)))


def _icosahedron_vertices():
    verts = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            verts.append((0.0, s1, s2 * GOLDEN))
            verts.append((s1, s2 * GOLDEN, 0.0))
            verts.append((s2 * GOLDEN, 0.0, s1))
    V = np.array(verts)
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def inscribed_vertices(radius, shape):
    if radius <= 0:
        raise GeometryError(f"inscribed radius must be positive, got {radius}")
    if shape == "cube":
        return radius / math.sqrt(3.0) * np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    if shape == "icosahedron":
        return radius * _icosahedron_vertices()
    if shape == "square":
        return radius / math.sqrt(2.0) * np.array(list(itertools.product((-1.0, 1.0), repeat=2)))
    if shape == "interval":
        return np.array([[-radius], [radius]])
    raise GeometryError(f"unknown inscribed shape '{shape}'")


def inscribed_polytope(radius, shape="cube"):
    """Polytope with every vertex on the sphere of the given radius."""
    return hrep_from_vertices(inscribed_vertices(radius, shape))


def _check_tightening_args(p, K, d_bar):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    d_bar = np.asarray(d_bar, dtype=float).ravel()
    if K.shape != (p.dim, d_bar.size):
        raise GeometryError(f"K must be {p.dim}x{d_bar.size}, got {K.shape}")
    if K.shape[0] == K.shape[1] and abs(np.linalg.det(K)) < 1e-12:
        raise GeometryError("K is singular")
    if np.any(d_bar < 0):
        raise GeometryError("disturbance bound must be non-negative")
    return K, d_bar


def tightening_coefficients(p, K, d_bar):
    """Support of K [-d_bar, d_bar] along every facet normal: |K^T h_i| . d_bar.

    This is the shift that keeps u + K d inside p for every admissible d. The
    |K^-T h_i| . d_bar form is a different quantity and matches it only when K
    is diagonal with unit-magnitude entries.
    """
    K, d_bar = _check_tightening_args(p, K, d_bar)
    return np.abs(p.H @ K) @ d_bar


def tighten(p, K, d_bar, alpha):
    """p minus alpha K [-d_bar, d_bar] (Minkowski difference, same H)."""
    if alpha < 0:
        raise GeometryError(f"alpha must be non-negative, got {alpha}")
    return Polytope(p.H, p.b - alpha * tightening_coefficients(p, K, d_bar))


def can_cancel_disturbance(U, K, d_bar):
    """True when every corner of K [-d_bar, d_bar] lies in -U."""
    K, d_bar = _check_tightening_args(U, K, d_bar)
    corners = np.array(list(itertools.product(*[(-v, v) for v in d_bar])))
    return all(U.contains(-(K @ d), tol=1e-12) for d in corners)


def alpha_max_for_zero_input(U, K, d_bar):
    """Largest alpha keeping the origin inside the tightened set."""
    if not U.origin_interior():
        raise GeometryError("origin is not strictly inside the input set")
    t = tightening_coefficients(U, K, d_bar)
    active = t > 0.0
    if not np.any(active):
        return math.inf
    return float(np.min(U.b[active] / t[active]))


# --- Thruster allocation ---

def allocation_matrix(thrusters):
    """6 x m matrix with column [d; r x d] per thruster (position r, direction d)."""
    columns = []
    for thruster in thrusters:
        r = np.asarray(thruster["position"], dtype=float)
        d = np.asarray(thruster["direction"], dtype=float)
        d = d / np.linalg.norm(d)
        columns.append(np.concatenate([d, np.cross(r, d)]))
    return np.array(columns).T


def block_zonotopes(G, mu_min, mu_max, force_axes=(0, 1, 2), torque_axes=(3, 4, 5)):
    """Split a wrench allocation into force and torque zonotopes."""
    G = np.asarray(G, dtype=float)
    return (
        Zonotope(G[list(force_axes)], mu_min, mu_max),
        Zonotope(G[list(torque_axes)], mu_min, mu_max),
    )


def effective_input_set(G, mu_min, mu_max, shape="cube", planar=False):
    """Attitude-invariant input polytope from a thruster allocation.

    Each block's inscribed ball is rotation invariant, so the inscribed
    polytope stays feasible whatever the body attitude.
    """
    if planar:
        force, torque = block_zonotopes(G, mu_min, mu_max, (0, 1), (5,))
        force_shape, torque_shape = "square", "interval"
    else:
        force, torque = block_zonotopes(G, mu_min, mu_max)
        force_shape = torque_shape = shape
    blocks = []
    for zono, block_shape in ((force, force_shape), (torque, torque_shape)):
        radius = inscribed_sphere_radius(hrep_from_vertices(zonotope_vertices(zono)))
        logger.debug("[Geometry] inscribed radius %.6g for %s block", radius, block_shape)
        blocks.append(inscribed_polytope(radius, block_shape))
    return blocks[0].product(blocks[1])
