"""Convex polyhedra and distances from an interior probe to face planes and
edge lines."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadTopology,
    NonPlanarFace,
    NonPositiveRadius,
    NotConvex,
    ProbeNotInterior,
    TooFewVertices,
    ValidationError,
)

PLANARITY_RTOL = 1e-9
CONVEXITY_RTOL = 1e-9
BOUNDARY_ATOL = 1e-12

TARGETS = ("faces", "edges")


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValidationError(f"non-finite point ({self.x}, {self.y}, {self.z})")

    def __getitem__(self, i):
        return (self.x, self.y, self.z)[i]

    def __iter__(self):
        yield self.x
        yield self.y
        yield self.z

    @classmethod
    def of(cls, p) -> "Point3":
        if isinstance(p, Point3):
            return p
        x, y, z = p
        return cls(float(x), float(y), float(z))

    @classmethod
    def parse(cls, text: str) -> "Point3":
        parts = text.split(",")
        if len(parts) != 3:
            raise ValidationError(f"expected 'x,y,z', got {text!r}")
        try:
            return cls(*(float(s) for s in parts))
        except ValueError as exc:
            raise ValidationError(f"bad coordinate in {text!r}") from exc

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class Polyhedron3D:
    """Validated convex polyhedron; faces are outward-oriented index cycles.

    Build through :func:`validate_polyhedron`.
    """

    vertices: tuple[Point3, ...]
    faces: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def m(self) -> int:
        return len(self.faces)

    @property
    def r(self) -> int:
        return len(self.edges)

    @cached_property
    def array(self) -> np.ndarray:
        return np.array([tuple(p) for p in self.vertices], dtype=float)

    @cached_property
    def planes(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals ``N`` and offsets ``d`` with ``N @ x <= d`` inside."""
        normals, offsets = [], []
        for face in self.faces:
            nrm, off = _fit_plane(self.array[list(face)])
            normals.append(nrm)
            offsets.append(off)
        normals = np.array(normals)
        offsets = np.array(offsets)
        centroid = self.array.mean(axis=0)
        flip = normals @ centroid > offsets
        normals[flip] *= -1
        offsets[flip] *= -1
        return normals, offsets

    @cached_property
    def edge_frames(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge start points and unit directions."""
        a = self.array[[e[0] for e in self.edges]]
        b = self.array[[e[1] for e in self.edges]]
        d = b - a
        return a, d / np.linalg.norm(d, axis=1)[:, None]

    def face_distances(self, m) -> np.ndarray:
        """Signed distance of ``m`` to every face plane, positive inside."""
        normals, offsets = self.planes
        return offsets - normals @ np.asarray(tuple(m), dtype=float)

    def to_json(self) -> dict:
        return {
            "vertices": [p.as_list() for p in self.vertices],
            "faces": [list(f) for f in self.faces],
        }


def _fit_plane(pts: np.ndarray) -> tuple[np.ndarray, float]:
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c)
    nrm = vt[-1]
    return nrm, float(nrm @ c)


def _newell(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    return np.cross(pts, nxt).sum(axis=0)


def validate_polyhedron(vertices: Iterable, faces: Iterable[Sequence[int]]) -> Polyhedron3D:
    """Validate a convex polyhedron given as vertices plus face index cycles.

    Face cycles are reoriented so their normals point away from the vertex
    centroid; edges are derived from the faces.
    """
    verts = [Point3.of(p) for p in vertices]
    cycles = [tuple(int(i) for i in f) for f in faces]
    if len(verts) < 4:
        raise TooFewVertices(f"a polyhedron needs at least 4 vertices, got {len(verts)}")
    if len(cycles) < 4:
        raise BadTopology(f"a polyhedron needs at least 4 faces, got {len(cycles)}")
    for f in cycles:
        if len(f) < 3:
            raise BadTopology(f"face {list(f)} has fewer than 3 vertices")
        if len(set(f)) != len(f):
            raise BadTopology(f"face {list(f)} repeats a vertex")
        if any(i < 0 or i >= len(verts) for i in f):
            raise BadTopology(f"face {list(f)} indexes outside the vertex list")

    arr = np.array([tuple(p) for p in verts], dtype=float)
    diag = float(np.linalg.norm(arr.max(axis=0) - arr.min(axis=0)))
    if diag == 0.0:
        raise NotConvex("all vertices coincide")
    centroid = arr.mean(axis=0)

    oriented = []
    for f in cycles:
        pts = arr[list(f)]
        nrm, off = _fit_plane(pts)
        dev = np.abs(pts @ nrm - off).max()
        if dev > PLANARITY_RTOL * diag:
            raise NonPlanarFace(f"face {list(f)} deviates {dev:.3g} from its plane")
        if nrm @ centroid > off:
            nrm, off = -nrm, -off
        height = off - arr @ nrm
        if height.min() < -CONVEXITY_RTOL * diag:
            raise NotConvex(f"a vertex lies outside the plane of face {list(f)}")
        if off - nrm @ centroid <= CONVEXITY_RTOL * diag:
            raise NotConvex("polyhedron is flat")
        if _newell(pts) @ nrm < 0:
            f = f[::-1]
        oriented.append(f)

    counts: Counter = Counter()
    order: list[tuple[int, int]] = []
    for f in oriented:
        for i, j in zip(f, f[1:] + f[:1]):
            e = (min(i, j), max(i, j))
            if e not in counts:
                order.append(e)
            counts[e] += 1
    bad = [e for e, k in counts.items() if k != 2]
    if bad:
        raise BadTopology(f"edge {list(bad[0])} is shared by {counts[bad[0]]} faces, not 2")
    n, r, m = len(verts), len(order), len(oriented)
    if n - r + m != 2:
        raise BadTopology(f"Euler check failed: n - r + m = {n} - {r} + {m} != 2")
    return Polyhedron3D(tuple(verts), tuple(oriented), tuple(order))


def regular_tetrahedron(circumradius: float = 1.0) -> Polyhedron3D:
    if not circumradius > 0:
        raise NonPositiveRadius(f"circumradius must be positive, got {circumradius}")
    s = circumradius / math.sqrt(3.0)
    verts = [(s, s, s), (s, -s, -s), (-s, s, -s), (-s, -s, s)]
    return validate_polyhedron(verts, itertools.combinations(range(4), 3))


def cube(half_side: float = 1.0) -> Polyhedron3D:
    """Axis-aligned cube ``[-h, h]^3``."""
    h = half_side
    verts = [(x, y, z) for x in (-h, h) for y in (-h, h) for z in (-h, h)]
    faces = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # x = -h, x = +h
        (0, 4, 5, 1), (2, 3, 7, 6),  # y
        (0, 2, 6, 4), (1, 5, 7, 3),  # z
    ]
    return validate_polyhedron(verts, faces)


FIXTURES = {"tetra": regular_tetrahedron, "cube": cube}


def load_polyhedron(data: dict) -> Polyhedron3D:
    """Build a polyhedron from ``{"vertices": [[x,y,z],...], "faces": [[...],...]}``."""
    try:
        return validate_polyhedron(data["vertices"], data["faces"])
    except (KeyError, TypeError) as exc:
        raise ValidationError("mesh JSON needs 'vertices' and 'faces' lists") from exc


def contains_interior_3d(p: Polyhedron3D, m) -> bool:
    return bool(p.face_distances(m).min() > BOUNDARY_ATOL)


def _require_interior(p: Polyhedron3D, m) -> Point3:
    m = Point3.of(m)
    if not contains_interior_3d(p, m):
        raise ProbeNotInterior(f"probe {m.as_list()} is not strictly inside the polyhedron")
    return m


def vertex_distances_3d(p: Polyhedron3D, m) -> list[float]:
    m = _require_interior(p, m)
    return np.linalg.norm(p.array - np.array(tuple(m)), axis=1).tolist()


@dataclass(frozen=True)
class FaceFoot:
    face_index: int
    foot: Point3
    distance: float
    inside_face: bool


def face_pedal_details(p: Polyhedron3D, m) -> list[FaceFoot]:
    """Perpendicular feet on every face plane, flagged by whether they land
    inside the face polygon."""
    m = _require_interior(p, m)
    normals, _ = p.planes
    dist = p.face_distances(m)
    mv = np.array(tuple(m))
    out = []
    for j, face in enumerate(p.faces):
        foot = mv + dist[j] * normals[j]
        pts = p.array[list(face)]
        inside = all(
            np.cross(b - a, foot - a) @ normals[j] >= -1e-12
            for a, b in zip(pts, np.roll(pts, -1, axis=0))
        )
        out.append(FaceFoot(j, Point3.of(foot), float(dist[j]), bool(inside)))
    return out


def face_pedal(p: Polyhedron3D, m) -> list[float]:
    _require_interior(p, m)
    return p.face_distances(m).tolist()


def line_distances(p: Polyhedron3D, m) -> np.ndarray:
    """Distance from ``m`` to every edge line, without the interior check."""
    a, u = p.edge_frames
    return np.linalg.norm(np.cross(np.asarray(tuple(m), dtype=float) - a, u), axis=1)


def edge_pedal(p: Polyhedron3D, m) -> list[float]:
    _require_interior(p, m)
    return line_distances(p, m).tolist()


@dataclass(frozen=True)
class RatioReport3:
    sum_vertex: float
    sum_pedal: float
    ratio: float
    target: str
    probe: Point3

    def to_json(self) -> dict:
        return {
            "sum_vertex": self.sum_vertex,
            "sum_pedal": self.sum_pedal,
            "ratio": self.ratio,
            "target": self.target,
            "probe": self.probe.as_list(),
        }


def em_ratio_3d(p: Polyhedron3D, m, target: str = "faces") -> RatioReport3:
    if target == "faces":
        pedal = face_pedal(p, m)
    elif target == "edges":
        pedal = edge_pedal(p, m)
    else:
        raise ValidationError(f"target must be 'faces' or 'edges', got {target!r}")
    m = Point3.of(m)
    sv = math.fsum(vertex_distances_3d(p, m))
    sp = math.fsum(pedal)
    return RatioReport3(sv, sp, sv / sp, target, m)
