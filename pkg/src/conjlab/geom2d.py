"""Planar geometry for the Erdős–Mordell ratio.

Polygons are stored counterclockwise, so the interior lies to the left of
every directed side ``A_i -> A_{i+1}``.  Pedal feet are taken on the
supporting line of each side, never clamped to the segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateAngle,
    DuplicateVertex,
    NotConvex,
    ProbeNotInterior,
    TooFewVertices,
    ValidationError,
)

CONVEXITY_RTOL = 1e-12
BOUNDARY_ATOL = 1e-12


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite point ({self.x}, {self.y})")

    def __getitem__(self, i):
        return (self.x, self.y)[i]

    def __iter__(self):
        yield self.x
        yield self.y

    @classmethod
    def of(cls, p) -> "Point2":
        if isinstance(p, Point2):
            return p
        x, y = p
        return cls(float(x), float(y))

    @classmethod
    def parse(cls, text: str) -> "Point2":
        """Parse ``"x,y"``."""
        parts = text.split(",")
        if len(parts) != 2:
            raise ValidationError(f"expected 'x,y', got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as exc:
            raise ValidationError(f"bad coordinate in {text!r}") from exc

    def as_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class ConvexPolygon2D:
    """A strictly convex polygon with counterclockwise vertices.

    Build instances through :func:`validate_polygon`.
    """

    vertices: tuple[Point2, ...]

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.vertices], dtype=float)

    @cached_property
    def side_frames(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit directions, inward unit normals and side lengths."""
        a = self.array
        d = np.roll(a, -1, axis=0) - a
        length = np.hypot(d[:, 0], d[:, 1])
        u = d / length[:, None]
        inward = np.column_stack([-u[:, 1], u[:, 0]])
        return u, inward, length

    def signed_distances(self, m) -> np.ndarray:
        """Signed distance of ``m`` to each side line, positive inside."""
        _, inward, _ = self.side_frames
        rel = np.asarray(tuple(m), dtype=float) - self.array
        return np.einsum("ij,ij->i", rel, inward)

    def to_json(self) -> dict:
        return {"vertices": [p.as_list() for p in self.vertices]}


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def signed_area(points: Sequence) -> float:
    s = 0.0
    for i, p in enumerate(points):
        q = points[(i + 1) % len(points)]
        s += p[0] * q[1] - q[0] * p[1]
    return 0.5 * s


def validate_polygon(points: Iterable) -> ConvexPolygon2D:
    """Check strict convexity and return a counterclockwise polygon.

    Clockwise input is reversed.  Raises :class:`TooFewVertices`,
    :class:`DuplicateVertex` or :class:`NotConvex`.
    """
    pts = [Point2.of(p) for p in points]
    if len(pts) < 3:
        raise TooFewVertices(f"a polygon needs at least 3 vertices, got {len(pts)}")
    xs = [p.x for p in pts]
    ys = [p.y for p in pts]
    diag = math.hypot(max(xs) - min(xs), max(ys) - min(ys))
    if diag == 0.0:
        raise DuplicateVertex("all vertices coincide")
    for i, p in enumerate(pts):
        for q in pts[i + 1:]:
            if math.hypot(p.x - q.x, p.y - q.y) <= 1e-12 * diag:
                raise DuplicateVertex(f"repeated vertex ({p.x}, {p.y})")
    if signed_area(pts) < 0:
        pts.reverse()
    tol = CONVEXITY_RTOL * diag * diag
    n = len(pts)
    for i in range(n):
        cr = _cross(pts[i - 1], pts[i], pts[(i + 1) % n])
        if cr <= tol:
            raise NotConvex(
                f"vertex {i} at ({pts[i].x}, {pts[i].y}) is reflex or collinear"
            )
    # A star polygon has every turn positive but winds more than once.
    turning = 0.0
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        turning += math.atan2(
            _cross(a, b, c),
            (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y),
        )
    if abs(turning - 2 * math.pi) > 1e-6:
        raise NotConvex("vertex sequence winds more than once")
    return ConvexPolygon2D(tuple(pts))


def contains_interior(poly: ConvexPolygon2D, m) -> bool:
    """True iff ``m`` is strictly inside ``poly`` (boundary counts as outside)."""
    return bool(poly.signed_distances(m).min() > BOUNDARY_ATOL)


def _require_interior(poly: ConvexPolygon2D, m) -> Point2:
    m = Point2.of(m)
    if not contains_interior(poly, m):
        raise ProbeNotInterior(f"probe ({m.x}, {m.y}) is not strictly inside the polygon")
    return m


def vertex_distances(poly: ConvexPolygon2D, m) -> list[float]:
    m = _require_interior(poly, m)
    return [math.hypot(a.x - m.x, a.y - m.y) for a in poly.vertices]


@dataclass(frozen=True)
class PedalEntry:
    side_index: int
    foot: Point2
    distance: float
    # position of the foot along A_i -> A_{i+1}; inside the segment iff 0 <= t <= 1
    t: float

    @property
    def on_segment(self) -> bool:
        return 0.0 <= self.t <= 1.0


@dataclass(frozen=True)
class PedalSet:
    angle_deg: float
    entries: tuple[PedalEntry, ...]

    @property
    def distances(self) -> list[float]:
        return [e.distance for e in self.entries]

    @property
    def total(self) -> float:
        return math.fsum(self.distances)


def _check_angle(angle_deg: float) -> float:
    if not (0.0 < angle_deg < 180.0):
        raise DegenerateAngle(f"angle must lie strictly between 0 and 180 degrees, got {angle_deg}")
    return math.radians(angle_deg)


def oblique_pedal(poly: ConvexPolygon2D, m, angle_deg: float) -> PedalSet:
    """Project ``m`` onto every side line along a fixed oriented angle.

    The foot ``P_i`` is the point of the line through ``A_i A_{i+1}`` for
    which the counterclockwise angle from the side direction to ``P_i -> M``
    equals ``angle_deg``.  Its length is the perpendicular distance divided
    by ``sin(angle)``.
    """
    theta = _check_angle(angle_deg)
    m = _require_interior(poly, m)
    u, _, length = poly.side_frames
    h = poly.signed_distances(m)
    s, c = math.sin(theta), math.cos(theta)
    if angle_deg == 90.0:
        s, c = 1.0, 0.0
    entries = []
    for i, a in enumerate(poly.vertices):
        ux, uy = float(u[i][0]), float(u[i][1])
        dx, dy = c * ux - s * uy, s * ux + c * uy
        dist = float(h[i]) / s
        fx, fy = m.x - dist * dx, m.y - dist * dy
        t = ((fx - a.x) * ux + (fy - a.y) * uy) / float(length[i])
        entries.append(PedalEntry(i, Point2(fx, fy), dist, t))
    return PedalSet(float(angle_deg), tuple(entries))


def perpendicular_pedal(poly: ConvexPolygon2D, m) -> PedalSet:
    return oblique_pedal(poly, m, 90.0)


@dataclass(frozen=True)
class RatioReport:
    sum_vertex: float
    sum_pedal: float
    ratio: float
    angle_deg: float
    probe: Point2

    def to_json(self) -> dict:
        return {
            "sum_vertex": self.sum_vertex,
            "sum_pedal": self.sum_pedal,
            "ratio": self.ratio,
            "angle_deg": self.angle_deg,
            "probe": self.probe.as_list(),
        }


def em_ratio(poly: ConvexPolygon2D, m, angle_deg: float = 90.0) -> RatioReport:
    """Sum of vertex distances over sum of pedal distances at ``angle_deg``."""
    pedal = oblique_pedal(poly, m, angle_deg)
    m = Point2.of(m)
    sv = math.fsum(vertex_distances(poly, m))
    sp = pedal.total
    return RatioReport(sv, sp, sv / sp, float(angle_deg), m)


def regular_polygon(n: int, circumradius: float = 1.0, phase: float = 0.0) -> ConvexPolygon2D:
    """Regular ``n``-gon centred at the origin, first vertex at angle ``phase``."""
    return validate_polygon(
        (circumradius * math.cos(phase + 2 * math.pi * i / n),
         circumradius * math.sin(phase + 2 * math.pi * i / n))
        for i in range(n)
    )


def load_polygon(data: dict) -> ConvexPolygon2D:
    """Build a polygon from ``{"vertices": [[x, y], ...]}``."""
    try:
        verts = data["vertices"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("polygon JSON needs a 'vertices' list") from exc
    if not isinstance(verts, list) or any(len(v) != 2 for v in verts):
        raise ValidationError("each polygon vertex must be [x, y]")
    return validate_polygon(verts)
