"""Planar rigid-body geometry.

SE(2) poses, body twists and wrenches, polygonal object shapes, pusher
fingers and the contact detection that feeds the contact resolvers.

Lengths are in millimetres, angles in radians and velocities in mm/s.
All quantities attached to an object are expressed in its body frame,
whose origin is the object's center of mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigError, OverlapError

TWO_PI = 2.0 * math.pi

# relative position along an edge below which a witness counts as a vertex
_VERTEX_EPS = 1e-9


def wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    t = math.remainder(theta, TWO_PI)
    return math.pi if t <= -math.pi else t


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def cross2(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def rot90(v) -> np.ndarray:
    """Rotate a planar vector 90 degrees counter-clockwise."""
    return np.array([-v[1], v[0]])


@dataclass(frozen=True)
class Pose:
    """SE(2) configuration; theta is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        vals = (float(self.x), float(self.y), float(self.theta))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose {vals}")
        object.__setattr__(self, "x", vals[0])
        object.__setattr__(self, "y", vals[1])
        object.__setattr__(self, "theta", wrap_angle(vals[2]))

    @classmethod
    def from_array(cls, q) -> "Pose":
        x, y, theta = (float(v) for v in q)
        return cls(x, y, theta)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_world(self, pts) -> np.ndarray:
        """Map body-frame points (n, 2) to world coordinates."""
        pts = np.asarray(pts, dtype=float)
        return pts @ rotation(self.theta).T + self.position

    def to_body(self, pts) -> np.ndarray:
        """Map world points (n, 2) into this frame."""
        pts = np.asarray(pts, dtype=float)
        return (pts - self.position) @ rotation(self.theta)


class Twist(NamedTuple):
    """Body twist [vx, vy, omega]."""

    vx: float
    vy: float
    omega: float


class Wrench(NamedTuple):
    """Body wrench [fx, fy, tau]."""

    fx: float
    fy: float
    tau: float


def contact_jacobian(p) -> np.ndarray:
    """Return J_p, mapping a body twist to the body-frame velocity of point p."""
    px, py = float(p[0]), float(p[1])
    return np.array([[1.0, 0.0, -py], [0.0, 1.0, px]])


def torque_null_vector(p) -> np.ndarray:
    """The vector t = [-p_y, p_x, -1] spanning the null space of J_p."""
    return np.array([-float(p[1]), float(p[0]), -1.0])


def pose_deviation(q1: Pose, q2: Pose, rho: float) -> float:
    """Combined translational and angular deviation between two poses.

    The angular part is the wrapped angle difference scaled by the
    characteristic length ``rho`` so that both terms are lengths.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    dth = abs(q1.theta - q2.theta) % TWO_PI
    return math.hypot(q1.x - q2.x, q1.y - q2.y) + rho * min(dth, TWO_PI - dth)


def integrate_pose(q: Pose, twist, dt: float) -> Pose:
    """First-order step of a body twist, rotated into the world frame."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    vx, vy, omega = (float(v) for v in twist)
    c, s = math.cos(q.theta), math.sin(q.theta)
    return Pose(
        q.x + (c * vx - s * vy) * dt,
        q.y + (s * vx + c * vy) * dt,
        q.theta + omega * dt,
    )


# ---------------------------------------------------------------------------
# polygons


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = cross2(q2 - q1, p1 - q1)
    d2 = cross2(q2 - q1, p2 - q1)
    d3 = cross2(p2 - p1, q1 - p1)
    d4 = cross2(p2 - p1, q2 - p1)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def points_in_polygon(points, vertices) -> np.ndarray:
    """Even-odd rule containment test for an (n, 2) array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(vertices, dtype=float)
    b = np.roll(a, -1, axis=0)
    px = pts[:, 0:1]
    py = pts[:, 1:2]
    cond = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (py - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    crossings = np.sum(cond & (px < xint), axis=1)
    return crossings % 2 == 1


def closest_boundary_point(point, vertices):
    """Closest point on a closed polyline.

    Returns ``(c, edge_index, t, dist)`` where ``c = v[i] + t (v[i+1] - v[i])``.
    """
    a = np.asarray(vertices, dtype=float)
    b = np.roll(a, -1, axis=0)
    d = b - a
    pt = np.asarray(point, dtype=float)
    dd = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", pt - a, d) / dd, 0.0, 1.0)
    c = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", c - pt, c - pt)
    i = int(np.argmin(dist2))
    return c[i], i, float(t[i]), math.sqrt(dist2[i])


def closest_boundary_points(points, vertices):
    """Vectorized :func:`closest_boundary_point` for an (n, 2) array of points."""
    a = np.asarray(vertices, dtype=float)
    d = np.roll(a, -1, axis=0) - a
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip((rel * d).sum(axis=2) / (d * d).sum(axis=1), 0.0, 1.0)
    diff = rel - t[:, :, None] * d
    dist2 = (diff * diff).sum(axis=2)
    i = np.argmin(dist2, axis=1)
    k = np.arange(len(pts))
    tk = t[k, i]
    return a[i] + tk[:, None] * d[i], i, tk, np.sqrt(dist2[k, i])


@dataclass(frozen=True, eq=False)
class Shape:
    """Closed polygon in the body frame (COM at the origin), stored CCW.

    ``rho`` is the characteristic length; it defaults to the radius of
    gyration of the polygon area about the origin.
    """

    vertices: np.ndarray
    rho: float | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ConfigError("a shape needs at least 3 vertices given as [x, y] pairs")
        if not np.all(np.isfinite(v)):
            raise ConfigError("shape vertices must be finite")
        area = polygon_area(v)
        if area == 0:
            raise ConfigError("degenerate shape with zero area")
        if area < 0:
            v = v[::-1].copy()
        n = len(v)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ConfigError("shape boundary self-intersects")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        rho = self.rho if self.rho is not None else self.radius_of_gyration()
        if not rho > 0:
            raise ConfigError("characteristic length rho must be positive")
        object.__setattr__(self, "rho", float(rho))

    @property
    def edges(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def inward_normals(self) -> np.ndarray:
        d = self.edges
        n = np.column_stack([-d[:, 1], d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def radius_of_gyration(self) -> float:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        j = np.sum(cr * (v[:, 0] ** 2 + v[:, 0] * w[:, 0] + w[:, 0] ** 2
                         + v[:, 1] ** 2 + v[:, 1] * w[:, 1] + w[:, 1] ** 2)) / 12.0
        return math.sqrt(j / polygon_area(v))

    @property
    def radius(self) -> float:
        """Radius of the smallest origin-centred circle containing the shape."""
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def min_width(self) -> float:
        """Minimum caliper width of the convex hull."""
        from scipy.spatial import ConvexHull

        hull = self.vertices[ConvexHull(self.vertices).vertices]
        d = np.roll(hull, -1, axis=0) - hull
        nrm = np.column_stack([-d[:, 1], d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
        proj = hull @ nrm.T
        return float(np.min(proj.max(axis=0) - proj.min(axis=0)))

    def contains(self, pts) -> np.ndarray:
        return points_in_polygon(pts, self.vertices)

    def to_json(self) -> list:
        return self.vertices.tolist()

    # constructors

    @classmethod
    def rectangle(cls, width: float, height: float, rho=None) -> "Shape":
        w, h = width / 2.0, height / 2.0
        return cls(np.array([[-w, -h], [w, -h], [w, h], [-w, h]]), rho)

    @classmethod
    def disc(cls, radius: float, segments: int = 128, rho=None) -> "Shape":
        phi = np.linspace(0.0, TWO_PI, segments, endpoint=False)
        return cls(radius * np.column_stack([np.cos(phi), np.sin(phi)]), rho)

    @classmethod
    def butterfly(cls, long_diameter: float = 39.0, short_diameter: float = 28.6,
                  segments: int = 120, lobe: float = 1.5, rho=None) -> "Shape":
        """Two convex lobes joined by concave waists.

        Polar curve r = r0 + b cos 2phi + c cos 4phi with r(0) and r(pi/2)
        pinned to the two half diameters.  Not exactly centred on the area
        centroid, so the vertices are shifted to put the COM at the origin.
        """
        b = (long_diameter - short_diameter) / 4.0
        c = -abs(lobe)
        r0 = long_diameter / 2.0 - b - c
        phi = np.linspace(0.0, TWO_PI, segments, endpoint=False)
        r = r0 + b * np.cos(2 * phi) + c * np.cos(4 * phi)
        v = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        return cls(v - polygon_centroid(v), rho)


def polygon_centroid(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    a = cr.sum() / 2.0
    return np.array([np.sum((v[:, 0] + w[:, 0]) * cr), np.sum((v[:, 1] + w[:, 1]) * cr)]) / (6 * a)


# ---------------------------------------------------------------------------
# pushers and contacts


@dataclass(frozen=True, eq=False)
class Finger:
    """A translating pusher finger.

    ``outline`` is a single point (shape (1, 2)) for a point finger or a
    CCW polygon in the finger frame; ``velocity`` is its world-frame linear
    velocity in mm/s.
    """

    outline: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        o = np.atleast_2d(np.asarray(self.outline, dtype=float))
        if o.shape[1] != 2 or len(o) == 2:
            raise ConfigError("finger outline must be one point or a polygon")
        if len(o) >= 3 and polygon_area(o) < 0:
            o = o[::-1].copy()
        object.__setattr__(self, "outline", o)
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(2))

    @property
    def is_point(self) -> bool:
        return len(self.outline) == 1

    @classmethod
    def point(cls, velocity=(0.0, 0.0)) -> "Finger":
        return cls(np.zeros((1, 2)), velocity)

    @classmethod
    def rectangle(cls, width: float, height: float, velocity=(0.0, 0.0)) -> "Finger":
        w, h = width / 2.0, height / 2.0
        return cls(np.array([[-w, -h], [w, -h], [w, h], [-w, h]]), velocity)


@dataclass(frozen=True, eq=False)
class PusherGeometry:
    fingers: tuple

    def __post_init__(self):
        object.__setattr__(self, "fingers", tuple(self.fingers))
        if not self.fingers:
            raise ConfigError("a pusher needs at least one finger")

    def __len__(self):
        return len(self.fingers)

    def __iter__(self):
        return iter(self.fingers)


@dataclass(frozen=True, eq=False)
class ContactPoint:
    """A pusher contact in the object body frame.

    ``normal`` is the unit inward normal on the object, ``v_p`` the pusher
    velocity at the contact expressed in the body frame and ``depth`` the
    penetration (positive when overlapping).
    """

    p: np.ndarray
    normal: np.ndarray
    v_p: np.ndarray
    mu_c: float = 0.0
    finger: int = 0
    depth: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(2)
        nn = np.linalg.norm(n)
        if not nn > 0:
            raise ValueError("contact normal must be non-zero")
        if self.mu_c < 0:
            raise ValueError("mu_c must be non-negative")
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2))
        object.__setattr__(self, "normal", n / nn)
        object.__setattr__(self, "v_p", np.asarray(self.v_p, dtype=float).reshape(2))

    @property
    def tangent(self) -> np.ndarray:
        """Unit tangent, the normal rotated counter-clockwise (the 'left' side)."""
        return rot90(self.normal)

    @property
    def D(self) -> np.ndarray:
        t = self.tangent
        return np.column_stack([t, -t])

    @property
    def jacobian(self) -> np.ndarray:
        return contact_jacobian(self.p)

    def scaled(self, rho: float) -> "ContactPoint":
        """The same contact with its position divided by ``rho``."""
        return ContactPoint(self.p / rho, self.normal, self.v_p, self.mu_c, self.finger, self.depth)


def _vertex_normal(normals, i_prev, i_next) -> np.ndarray:
    n = normals[i_prev] + normals[i_next]
    nn = np.linalg.norm(n)
    return n / nn if nn > 1e-12 else normals[i_next]


def _polygon_normals(vertices, inward: bool) -> np.ndarray:
    d = np.roll(vertices, -1, axis=0) - vertices
    n = np.column_stack([-d[:, 1], d[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    return n if inward else -n


def _witness_normal(c, t, i, dist, probe, normals, n_vertices, toward_probe: bool):
    """Normal at the closest boundary point c of ``probe``.

    Edge interior: the edge normal.  Vertex: the probe direction when the
    gap is finite, otherwise the bisector of the adjacent edge normals.
    """
    if _VERTEX_EPS < t < 1.0 - _VERTEX_EPS or dist <= 1e-9:
        if _VERTEX_EPS < t < 1.0 - _VERTEX_EPS:
            return normals[i]
        j = i if t <= _VERTEX_EPS else (i + 1) % n_vertices
        return _vertex_normal(normals, (j - 1) % n_vertices, j)
    u = (probe - c) / dist
    return u if toward_probe else -u


def _cluster(cands, tol):
    """Merge candidate contacts closer than tol (single linkage)."""
    parent = list(range(len(cands)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(cands)):
        for j in range(i):
            if np.linalg.norm(cands[i][0] - cands[j][0]) < tol:
                parent[root(i)] = root(j)
    members: dict[int, list] = {}
    for i in range(len(cands)):
        members.setdefault(root(i), []).append(cands[i])
    groups = list(members.values())
    out = []
    for g in groups:
        p = np.mean([c[0] for c in g], axis=0)
        n = np.sum([c[1] for c in g], axis=0)
        nn = np.linalg.norm(n)
        n = n / nn if nn > 1e-12 else g[0][1]
        out.append((p, n, max(c[2] for c in g)))
    out.sort(key=lambda c: (round(c[0][0], 9), round(c[0][1], 9)))
    return out


def detect_contacts(shape: Shape, object_pose: Pose, pusher: PusherGeometry | Sequence[Finger],
                    pusher_pose: Pose | Sequence[Pose], tol: float = 0.1,
                    max_penetration: float = 1.0, mu_c: float = 0.0) -> list[ContactPoint]:
    """Find pusher/object contacts within ``tol``.

    ``pusher_pose`` is either one pose shared by all fingers or one pose per
    finger.  Returned points lie on the object boundary, in the object body
    frame, with pusher velocities rotated into that frame.  Raises
    OverlapError when any penetration exceeds ``max_penetration``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    fingers = tuple(pusher)
    poses = [pusher_pose] * len(fingers) if isinstance(pusher_pose, Pose) else list(pusher_pose)
    if len(poses) != len(fingers):
        raise ValueError("need one pusher pose per finger")

    obj_v = shape.vertices
    obj_n = _polygon_normals(obj_v, inward=True)
    n_obj = len(obj_v)
    R_obj_T = rotation(object_pose.theta).T
    contacts: list[ContactPoint] = []

    for k, (finger, fpose) in enumerate(zip(fingers, poses)):
        outline = object_pose.to_body(fpose.to_world(finger.outline))
        v_body = R_obj_T @ finger.velocity
        cands = []
        inside = shape.contains(outline)
        cs, idx, ts, dists = closest_boundary_points(outline, obj_v)
        for vtx, ins, c, i, t, dist in zip(outline, inside, cs, idx, ts, dists):
            gap = -dist if ins else dist
            if gap > tol:
                continue
            if -gap > max_penetration:
                raise OverlapError(f"penetration {-gap:.4g} mm exceeds {max_penetration} mm", depth=-gap)
            # outside: normal points from pusher into object, i.e. away from the probe
            n = _witness_normal(c, t, i, dist, vtx, obj_n, n_obj, toward_probe=bool(ins))
            cands.append((c, n, max(-gap, 0.0)))
        if not finger.is_point:
            f_n = _polygon_normals(outline, inward=False)
            n_f = len(outline)
            lo, hi = outline.min(axis=0) - tol, outline.max(axis=0) + tol
            near = np.flatnonzero(np.all((obj_v >= lo) & (obj_v <= hi), axis=1))
            inside_f = points_in_polygon(obj_v[near], outline)
            cs, idx, ts, dists = closest_boundary_points(obj_v[near], outline)
            for vtx, ins, c, i, t, dist in zip(obj_v[near], inside_f, cs, idx, ts, dists):
                gap = -dist if ins else dist
                if gap > tol:
                    continue
                if -gap > max_penetration:
                    raise OverlapError(f"penetration {-gap:.4g} mm exceeds {max_penetration} mm", depth=-gap)
                n = _witness_normal(c, t, i, dist, vtx, f_n, n_f, toward_probe=not ins)
                cands.append((vtx.copy(), n, max(-gap, 0.0)))
        for p, n, depth in _cluster(cands, tol):
            contacts.append(ContactPoint(p, n, v_body, mu_c, k, depth))
    return contacts
