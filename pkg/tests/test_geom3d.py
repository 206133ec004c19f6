import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conjlab import geom3d
from conjlab.errors import BadTopology, NonPlanarFace, NonPositiveRadius, NotConvex, ProbeNotInterior
from conjlab.geom3d import em_ratio_3d, regular_tetrahedron, validate_polyhedron
from conjlab.optimizer import sample_tetrahedron

TETRA_FACES = list(itertools.combinations(range(4), 3))


def line_distance(p, a, b):
    """Point-to-line distance via the projection parameter, no cross products."""
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    t = (p - a) @ d / (d @ d)
    return float(np.linalg.norm(p - (a + t * d)))


def plane_distance(p, pts):
    """Distance to the plane through three points, from the tetrahedral volume."""
    p, a, b, c = (np.asarray(v, dtype=float) for v in (p, *pts[:3]))
    vol6 = abs(np.linalg.det(np.array([a - p, b - p, c - p])))
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    return vol6 / area2


def random_interior(rng, poly):
    w = rng.uniform(0.05, 1.0, poly.n)
    return (w / w.sum()) @ poly.array


class TestValidate:
    def test_tetrahedron(self):
        t = regular_tetrahedron(1.0)
        assert (t.n, t.m, t.r) == (4, 4, 6)

    def test_cube(self):
        c = geom3d.cube(1.0)
        assert (c.n, c.m, c.r) == (8, 6, 12)

    def test_reversed_face_is_reoriented(self):
        verts = regular_tetrahedron(1.0).array.tolist()
        faces = [list(f) for f in TETRA_FACES]
        faces[0] = faces[0][::-1]
        t = validate_polyhedron(verts, faces)
        normals, offsets = t.planes
        assert np.all(normals @ np.zeros(3) < offsets)
        for f, nrm in zip(t.faces, normals):
            pts = t.array[list(f)]
            assert np.cross(pts[1] - pts[0], pts[2] - pts[0]) @ nrm > 0

    def test_non_planar_face(self):
        verts = [(-1, -1, 0), (1, -1, 0), (1, 1, 0.3), (-1, 1, 0), (0, 0, 2)]
        faces = [(0, 1, 2, 3), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
        with pytest.raises(NonPlanarFace):
            validate_polyhedron(verts, faces)

    def test_non_convex(self):
        # a vertex pushed inside the solid breaks the face-plane test
        verts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0.1, 0.1, 0.1)]
        faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)]
        with pytest.raises((NotConvex, BadTopology)):
            validate_polyhedron(verts, faces)

    def test_missing_face(self):
        verts = regular_tetrahedron(1.0).array.tolist()
        with pytest.raises(BadTopology):
            validate_polyhedron(verts, TETRA_FACES[:3] + [TETRA_FACES[0]])

    def test_radius_must_be_positive(self):
        with pytest.raises(NonPositiveRadius):
            regular_tetrahedron(0.0)


class TestFixtures:
    def test_tetra_vertex_distances(self):
        d = geom3d.vertex_distances_3d(regular_tetrahedron(1.0), (0, 0, 0))
        assert d == pytest.approx([1.0] * 4, abs=1e-12)

    def test_tetra_inradius(self):
        assert geom3d.face_pedal(regular_tetrahedron(1.0), (0, 0, 0)) == pytest.approx([1 / 3] * 4, abs=1e-9)

    def test_radius_two_is_scaled(self):
        assert np.allclose(regular_tetrahedron(2.0).array, 2 * regular_tetrahedron(1.0).array, atol=1e-15)

    def test_edges_of_tetra(self):
        t = regular_tetrahedron(1.0)
        got = geom3d.edge_pedal(t, (0, 0, 0))
        oracle = [line_distance((0, 0, 0), t.array[i], t.array[j]) for i, j in t.edges]
        assert got == pytest.approx(oracle, abs=1e-12)
        assert got == pytest.approx([1 / math.sqrt(3)] * 6, abs=1e-9)

    def test_cube_distances(self):
        c = geom3d.cube(1.0)
        assert geom3d.face_pedal(c, (0, 0, 0)) == pytest.approx([1.0] * 6, abs=1e-12)
        assert sorted(geom3d.face_pedal(c, (0.5, 0, 0))) == pytest.approx([0.5, 1, 1, 1, 1, 1.5], abs=1e-12)
        assert geom3d.edge_pedal(c, (0, 0, 0)) == pytest.approx([math.sqrt(2)] * 12, abs=1e-12)


class TestInterior:
    def test_origin(self):
        assert geom3d.contains_interior_3d(regular_tetrahedron(1.0), (0, 0, 0))

    def test_vertex(self):
        t = regular_tetrahedron(1.0)
        assert not geom3d.contains_interior_3d(t, tuple(t.array[0]))

    def test_on_face(self):
        assert not geom3d.contains_interior_3d(geom3d.cube(1.0), (0, 0, 1))

    def test_pedal_rejects_exterior(self):
        with pytest.raises(ProbeNotInterior):
            geom3d.face_pedal(geom3d.cube(1.0), (0, 0, 2))


class TestRatio:
    def test_tetra_faces(self):
        assert em_ratio_3d(regular_tetrahedron(1.0), (0, 0, 0), "faces").ratio == pytest.approx(3.0, abs=1e-9)

    def test_tetra_edges(self):
        assert em_ratio_3d(regular_tetrahedron(1.0), (0, 0, 0), "edges").ratio == pytest.approx(2 / math.sqrt(3), abs=1e-9)

    def test_cube_faces(self):
        assert em_ratio_3d(geom3d.cube(1.0), (0, 0, 0), "faces").ratio == pytest.approx(4 / math.sqrt(3), abs=1e-9)

    def test_bad_target(self):
        with pytest.raises(ValueError):
            em_ratio_3d(geom3d.cube(1.0), (0, 0, 0), "sides")


def test_edge_line_distance_vanishes_on_the_line():
    c = geom3d.cube(1.0)
    i, j = c.edges[0]
    mid = 0.3 * c.array[i] + 0.7 * c.array[j]
    assert geom3d.line_distances(c, mid)[0] == pytest.approx(0.0, abs=1e-12)


def rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.05, 20.0))
def test_random_tetrahedra(seed, scale):
    rng = np.random.default_rng(seed)
    t = sample_tetrahedron(rng)
    m = random_interior(rng, t)
    faces = geom3d.face_pedal(t, m)
    edges = geom3d.edge_pedal(t, m)
    vd = np.linalg.norm(t.array - m, axis=1)
    # oracles independent of the cached plane and edge frames
    assert faces == pytest.approx([plane_distance(m, t.array[list(f)]) for f in t.faces], rel=1e-9, abs=1e-12)
    assert edges == pytest.approx([line_distance(m, t.array[i], t.array[j]) for i, j in t.edges], rel=1e-9, abs=1e-12)
    for f, d in zip(t.faces, faces):
        assert d <= vd[list(f)].min() + 1e-12
    assert t.n - t.r + t.m == 2
    base_f = em_ratio_3d(t, m, "faces").ratio
    base_e = em_ratio_3d(t, m, "edges").ratio
    # Kazarinoff floor on random configurations
    assert base_f >= 2 * math.sqrt(2) - 1e-6
    # similarity invariance
    q = rotation(rng)
    shift = rng.normal(size=3) * 10
    moved = validate_polyhedron(scale * t.array @ q.T + shift, t.faces)
    m2 = scale * q @ m + shift
    # relative: slivers put the probe near an edge line and the edge ratio in the 1e5 range
    assert em_ratio_3d(moved, m2, "faces").ratio == pytest.approx(base_f, rel=1e-9, abs=1e-9)
    assert em_ratio_3d(moved, m2, "edges").ratio == pytest.approx(base_e, rel=1e-9, abs=1e-9)
    moved_edges = dict(zip(moved.edges, geom3d.edge_pedal(moved, m2)))
    for e, d in zip(t.edges, edges):
        assert moved_edges[e] == pytest.approx(scale * d, rel=1e-9, abs=1e-12)


def test_load_polyhedron():
    p = geom3d.load_polyhedron(geom3d.cube(1.0).to_json())
    assert p.r == 12
    with pytest.raises(ValueError):
        geom3d.load_polyhedron({"vertices": []})
