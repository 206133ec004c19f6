"""Nested derivative-free minimisation of the Erdős–Mordell ratio.

The inner loop moves the probe, the outer loop moves the shape.  Probes are
parameterised by softmax weights over the vertices, so every candidate is a
strict convex combination and therefore interior.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import geom2d, geom3d
from .errors import BudgetTooSmall, ObjectiveNotFinite, ValidationError

log = logging.getLogger(__name__)

# logits are clipped so no weight underflows and pushes the probe onto the boundary
LOGIT_CLIP = 12.0
# probes closer than this (relative to the shape size) to a face count as infeasible,
# keeping them well clear of the geometry engine's own boundary test
PROBE_MARGIN = 1e-9
WARM_STEP = 0.2
# probe tolerance while the shape is still moving; the ratio error is quadratic in it
INNER_SEARCH_TOL = 1e-6
COUNTEREXAMPLE_TOL = 1e-3
KAZARINOFF_FLOOR = 2.0 * math.sqrt(2.0)
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 8
    inner_iterations: int = 300
    outer_iterations: int = 200
    simplex_tolerance: float = 1e-8
    shrink_floor: float = 1e-3

    def __post_init__(self):
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        for name in ("restarts", "inner_iterations", "outer_iterations"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if not (self.simplex_tolerance > 0 and self.shrink_floor > 0):
            raise ValidationError("tolerances must be positive")


def worker_count() -> int:
    env = os.environ.get("CONJLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer CONJLAB_THREADS=%r", env)
    return os.cpu_count() or 1


def parallel_map(fn, items: Sequence, workers: Optional[int] = None) -> list:
    """Order-preserving map, in worker processes when more than one is allowed."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def restart_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one restart, derived from (seed, index) only."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


# -- Nelder–Mead -----------------------------------------------------------

@dataclass
class NMResult:
    x: list
    value: float
    converged: bool
    iterations: int
    evaluations: int


# Plain float lists throughout: the simplices here have at most a few dozen
# coordinates, where numpy call overhead dominates the arithmetic.
def _nelder_mead(objective: Callable, start, tol: float, max_iter: int,
                 step_floor: float, step: float = 0.05) -> NMResult:
    x0 = [float(v) for v in np.atleast_1d(np.asarray(start, dtype=float))]
    dim = len(x0)
    f0 = float(objective(x0))
    if not math.isfinite(f0):
        raise ObjectiveNotFinite(f"objective is {f0} at the start point")
    sim = [(f0, 0, x0)]
    for i in range(dim):
        v = list(x0)
        v[i] += max(step * abs(v[i]), step_floor)
        sim.append((float(objective(v)), i + 1, v))
    evals = dim + 1
    tag = dim + 1  # insertion counter, breaks ties between equal values
    converged = False
    it = 0
    while it < max_iter:
        sim.sort(key=lambda e: (e[0], e[1]))
        best = sim[0][2]
        if max(abs(a - b) for _, _, v in sim[1:] for a, b in zip(v, best)) < tol:
            converged = True
            break
        it += 1
        worst_f, _, worst = sim[-1]
        centroid = [sum(c) / dim for c in zip(*(v for _, _, v in sim[:-1]))]
        xr = [2.0 * c - w for c, w in zip(centroid, worst)]
        fr = float(objective(xr))
        evals += 1
        tag += 1
        if fr < sim[0][0]:
            xe = [3.0 * c - 2.0 * w for c, w in zip(centroid, worst)]
            fe = float(objective(xe))
            evals += 1
            sim[-1] = (fe, tag, xe) if fe < fr else (fr, tag, xr)
        elif fr < sim[-2][0]:
            sim[-1] = (fr, tag, xr)
        else:
            if fr < worst_f:
                xc = [0.5 * (c + r) for c, r in zip(centroid, xr)]
            else:
                xc = [0.5 * (c + w) for c, w in zip(centroid, worst)]
            fc = float(objective(xc))
            evals += 1
            if fc < min(fr, worst_f):
                sim[-1] = (fc, tag, xc)
            else:
                shrunk = [sim[0]]
                for _, t, v in sim[1:]:
                    p = [0.5 * (a + b) for a, b in zip(best, v)]
                    shrunk.append((float(objective(p)), t, p))
                sim = shrunk
                evals += dim
    fbest, _, xbest = min(sim, key=lambda e: (e[0], e[1]))
    return NMResult(xbest, fbest, converged, it, evals)


def nelder_mead(objective: Callable, start, cfg: OptimizerConfig,
                max_iter: Optional[int] = None) -> tuple[np.ndarray, float]:
    """Minimise ``objective`` from ``start``; returns ``(argmin, value)``.

    Stops when every simplex vertex is within ``cfg.simplex_tolerance`` of the
    best one (per coordinate) or after ``max_iter`` iterations (default
    ``cfg.inner_iterations``).  The returned value never exceeds
    ``objective(start)``.
    """
    res = _nelder_mead(objective, start, cfg.simplex_tolerance,
                       cfg.inner_iterations if max_iter is None else max_iter,
                       cfg.shrink_floor)
    return np.array(res.x), res.value


# -- inner objective --------------------------------------------------------

def _weights(z) -> list[float]:
    logits = [min(max(float(v), -LOGIT_CLIP), LOGIT_CLIP) for v in z]
    logits.append(0.0)
    top = max(logits)
    w = [math.exp(v - top) for v in logits]
    s = sum(w)
    return [v / s for v in w]


class ProbeObjective:
    """Ratio as a function of the free logits of a probe.

    Infeasible probes (only possible through rounding) score ``inf`` and are
    counted in ``rejected``.
    """

    def __init__(self, shape, angle_deg: float = 90.0, target: str = "sides"):
        self.shape = shape
        self.target = target
        arr = shape.array
        if isinstance(shape, geom2d.ConvexPolygon2D):
            if target != "sides":
                raise ValidationError("polygons only support the 'sides' target")
            _, inward, _ = shape.side_frames
            normals = -inward
            offsets = np.einsum("ij,ij->i", normals, arr)
            self.scale = 1.0 if angle_deg == 90.0 else math.sin(math.radians(angle_deg))
            if not self.scale > 0:
                raise geom2d.DegenerateAngle(f"bad angle {angle_deg}")
        else:
            if target not in geom3d.TARGETS:
                raise ValidationError("polyhedra support the 'faces' and 'edges' targets")
            normals, offsets = shape.planes
            self.scale = 1.0
            a, u = shape.edge_frames
            self.edges = list(zip(a.tolist(), u.tolist()))
        self.vertices = arr.tolist()
        self.planes = list(zip(normals.tolist(), offsets.tolist()))
        span = arr.max(axis=0) - arr.min(axis=0)
        self.boundary = max(PROBE_MARGIN * float(np.linalg.norm(span)), 1e3 * geom2d.BOUNDARY_ATOL)
        self.rejected = 0
        self.evaluations = 0

    def probe(self, z) -> list[float]:
        w = _weights(z)
        return [sum(wi * v[k] for wi, v in zip(w, self.vertices))
                for k in range(len(self.vertices[0]))]

    def __call__(self, z) -> float:
        self.evaluations += 1
        m = self.probe(z)
        hsum = 0.0
        hmin = math.inf
        for nrm, off in self.planes:
            h = off - sum(a * b for a, b in zip(nrm, m))
            hsum += h
            if h < hmin:
                hmin = h
        if hmin <= self.boundary:
            self.rejected += 1
            return math.inf
        sv = sum(math.dist(v, m) for v in self.vertices)
        if self.target == "edges":
            sp = 0.0
            for a, u in self.edges:
                dx, dy, dz = m[0] - a[0], m[1] - a[1], m[2] - a[2]
                cx = dy * u[2] - dz * u[1]
                cy = dz * u[0] - dx * u[2]
                cz = dx * u[1] - dy * u[0]
                sp += math.sqrt(cx * cx + cy * cy + cz * cz)
        else:
            sp = hsum
        return self.scale * sv / sp


def _reevaluate(shape, probe, angle_deg: float, target: str) -> float:
    if isinstance(shape, geom2d.ConvexPolygon2D):
        return geom2d.em_ratio(shape, probe, angle_deg).ratio
    return geom3d.em_ratio_3d(shape, probe, target).ratio


def _probe_point(shape, m):
    if isinstance(shape, geom2d.ConvexPolygon2D):
        return geom2d.Point2(float(m[0]), float(m[1]))
    return geom3d.Point3(float(m[0]), float(m[1]), float(m[2]))


def inner_min_probe(shape, angle_deg: float = 90.0, target: str = "sides",
                    cfg: OptimizerConfig = OptimizerConfig()):
    """Best interior probe over ``cfg.restarts`` seeded Nelder–Mead runs.

    Restart 0 starts at the vertex centroid; the others at random logits.
    Returns ``(probe, min_ratio)`` with the ratio re-evaluated through the
    geometry engine.
    """
    obj = ProbeObjective(shape, angle_deg, target)
    dim = shape.n - 1
    best = None
    for r in range(cfg.restarts):
        z0 = np.zeros(dim) if r == 0 else restart_rng(cfg.seed, r).normal(0.0, 1.0, dim)
        res = _nelder_mead(obj, z0, cfg.simplex_tolerance, cfg.inner_iterations,
                           cfg.shrink_floor, step=0.5)
        if best is None or res.value < best.value:
            best = res
    probe = _probe_point(shape, obj.probe(best.x))
    return probe, _reevaluate(shape, probe, angle_deg, target)


# -- shape samplers -----------------------------------------------------------

SAMPLER_RETRY_CAP = 10_000


def sample_convex_polygon(n: int, rng: np.random.Generator) -> geom2d.ConvexPolygon2D:
    """Random strictly convex ``n``-gon around the unit circle.

    Vertices sit at sorted uniform angles with radii in ``[0.2, 1]``.  Each
    rejected draw narrows the radius band towards 1, which makes convexity
    reachable for large ``n``.
    """
    if n < 3:
        raise geom2d.TooFewVertices(f"n must be at least 3, got {n}")
    low = 0.2
    for _ in range(SAMPLER_RETRY_CAP):
        theta = np.sort(rng.uniform(0.0, 2 * math.pi, n))
        radius = rng.uniform(low, 1.0, n)
        pts = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
        try:
            return geom2d.validate_polygon(pts.tolist())
        except ValidationError:
            low = 1.0 - 0.7 * (1.0 - low)
    raise RuntimeError(f"sampler failed to draw a convex {n}-gon")


def sample_tetrahedron(rng: np.random.Generator) -> geom3d.Polyhedron3D:
    """Four random points in general position (radii in ``[0.2, 1]``)."""
    for _ in range(SAMPLER_RETRY_CAP):
        v = rng.normal(size=(4, 3))
        v *= (rng.uniform(0.2, 1.0, 4) / np.linalg.norm(v, axis=1))[:, None]
        try:
            return tetrahedron_from(v)
        except ValidationError:
            continue
    raise RuntimeError("sampler failed to draw a tetrahedron")


def tetrahedron_from(points) -> geom3d.Polyhedron3D:
    pts = np.asarray(points, dtype=float).reshape(4, 3)
    diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    vol = abs(np.linalg.det(pts[1:] - pts[0])) / 6.0
    if not vol > 1e-9 * diag ** 3:
        raise geom3d.NotConvex("tetrahedron is flat")
    return geom3d.validate_polyhedron(pts.tolist(), itertools.combinations(range(4), 3))


# -- constant estimation --------------------------------------------------------

@dataclass
class ConstantEstimate:
    n: object
    angle_deg: float
    target: str
    min_ratio: float
    shape: dict
    probe: list
    seed: int
    restarts: int
    converged: bool
    floor: Optional[float] = None
    counterexample: bool = False
    evaluations: int = 0
    timing: Optional[dict] = None

    def to_json(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "record_type": "constant_estimate"}
        out.update(asdict(self))
        if out["timing"] is None:
            del out["timing"]
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ConstantEstimate":
        fields = {k: v for k, v in d.items() if k not in ("schema_version", "record_type")}
        return cls(**fields)

    def rebuild(self):
        """Return ``(shape, probe)`` as geometry objects."""
        if self.target == "sides":
            return (geom2d.validate_polygon(self.shape["vertices"]),
                    geom2d.Point2.of(self.probe))
        return (geom3d.load_polyhedron(self.shape), geom3d.Point3.of(self.probe))

    def reevaluate(self) -> float:
        shape, probe = self.rebuild()
        return _reevaluate(shape, probe, self.angle_deg, self.target)


def conjectured_floor_2d(n: int, angle_deg: float = 90.0) -> float:
    """``sin(angle) * sec(pi/n)``, the regular-polygon centre value."""
    return math.sin(math.radians(angle_deg)) / math.cos(math.pi / n)


@dataclass
class _RestartOutcome:
    index: int
    ratio: float
    shape: object
    probe: object
    converged: bool
    evaluations: int


class _ShapeObjective:
    """Outer objective: best inner ratio for the shape encoded by ``x``."""

    def __init__(self, build, angle_deg, target, cfg):
        self.build = build
        self.angle_deg = angle_deg
        self.target = target
        self.cfg = cfg
        self.best = (math.inf, None, None)
        self.warm = None
        self.evaluations = 0

    def __call__(self, x) -> float:
        try:
            shape = self.build(x)
        except ValidationError:
            return math.inf
        obj = ProbeObjective(shape, self.angle_deg, self.target)
        # neighbouring shapes have neighbouring minimisers: start from the last best logits
        z0 = self.warm if self.warm is not None and math.isfinite(obj(self.warm)) else [0.0] * (shape.n - 1)
        res = _nelder_mead(obj, z0, max(self.cfg.simplex_tolerance, INNER_SEARCH_TOL),
                           self.cfg.inner_iterations, self.cfg.shrink_floor, step=WARM_STEP)
        self.evaluations += obj.evaluations
        if res.value < self.best[0]:
            self.best = (res.value, shape, obj.probe(res.x))
            self.warm = res.x
        return res.value


def _refine(build, start_shape, angle_deg, target, cfg, index) -> _RestartOutcome:
    obj = _ShapeObjective(build, angle_deg, target, cfg)
    x0 = start_shape.array.ravel()
    res = _nelder_mead(obj, x0, cfg.simplex_tolerance, cfg.outer_iterations,
                       cfg.shrink_floor, step=0.1)
    _, shape, m = obj.best
    # polish the probe on the best shape at full tolerance
    inner = ProbeObjective(shape, angle_deg, target)
    polish = _nelder_mead(inner, obj.warm, cfg.simplex_tolerance, cfg.inner_iterations,
                          cfg.shrink_floor, step=WARM_STEP)
    candidates = [m, inner.probe(polish.x)]
    scored = []
    for c in candidates:
        probe = _probe_point(shape, c)
        scored.append((_reevaluate(shape, probe, angle_deg, target), probe))
    ratio, probe = min(scored, key=lambda s: s[0])
    return _RestartOutcome(index, ratio, shape, probe, res.converged,
                           obj.evaluations + inner.evaluations)


def _polygon_from(x):
    return geom2d.validate_polygon(np.asarray(x).reshape(-1, 2).tolist())


def _restart_2d(args) -> _RestartOutcome:
    n, angle_deg, cfg, index = args
    start = sample_convex_polygon(n, restart_rng(cfg.seed, index))
    return _refine(_polygon_from, start, angle_deg, "sides", cfg, index)


def _restart_3d(args) -> _RestartOutcome:
    target, cfg, index = args
    if index == 0:
        start = geom3d.regular_tetrahedron(1.0)
    else:
        start = sample_tetrahedron(restart_rng(cfg.seed, index))
    return _refine(tetrahedron_from, start, 90.0, target, cfg, index)


def _mesh_restart(args) -> _RestartOutcome:
    mesh, target, cfg, index = args
    obj = ProbeObjective(mesh, 90.0, target)
    z0 = np.zeros(mesh.n - 1) if index == 0 else restart_rng(cfg.seed, index).normal(0, 1, mesh.n - 1)
    res = _nelder_mead(obj, z0, cfg.simplex_tolerance, cfg.inner_iterations,
                       cfg.shrink_floor, step=0.5)
    probe = _probe_point(mesh, obj.probe(res.x))
    return _RestartOutcome(index, _reevaluate(mesh, probe, 90.0, target), mesh, probe,
                           res.converged, obj.evaluations)


def _reduce(outcomes: list[_RestartOutcome]) -> _RestartOutcome:
    valid = [o for o in outcomes if o.shape is not None and math.isfinite(o.ratio)]
    if not valid:
        raise BudgetTooSmall("no valid shape was evaluated")
    return min(valid, key=lambda o: (o.ratio, o.index))


def estimate_constant_2d(n: int, angle_deg: float = 90.0,
                         cfg: OptimizerConfig = OptimizerConfig(),
                         workers: Optional[int] = None) -> ConstantEstimate:
    """Smallest ratio found over convex ``n``-gons and their interior probes."""
    if n < 3:
        raise geom2d.TooFewVertices(f"n must be at least 3, got {n}")
    geom2d._check_angle(angle_deg)
    jobs = [(n, angle_deg, cfg, i) for i in range(cfg.restarts)]
    outcomes = parallel_map(_restart_2d, jobs, workers)
    best = _reduce(outcomes)
    floor = conjectured_floor_2d(n, angle_deg)
    return ConstantEstimate(
        n=n, angle_deg=float(angle_deg), target="sides", min_ratio=best.ratio,
        shape=best.shape.to_json(), probe=best.probe.as_list(), seed=cfg.seed,
        restarts=len(outcomes), converged=best.converged, floor=floor,
        counterexample=best.ratio < floor - COUNTEREXAMPLE_TOL,
        evaluations=sum(o.evaluations for o in outcomes),
    )


def estimate_constant_3d(family: str = "tetrahedron", target: str = "faces",
                         cfg: OptimizerConfig = OptimizerConfig(),
                         mesh: Optional[geom3d.Polyhedron3D] = None,
                         workers: Optional[int] = None) -> ConstantEstimate:
    """Smallest face- or edge-target ratio over tetrahedra (or one fixed mesh).

    Restart 0 refines from the regular tetrahedron; the rest from random
    tetrahedra.
    """
    if target not in geom3d.TARGETS:
        raise ValidationError(f"target must be 'faces' or 'edges', got {target!r}")
    if family == "tetrahedron":
        jobs = [(target, cfg, i) for i in range(cfg.restarts)]
        outcomes = parallel_map(_restart_3d, jobs, workers)
    elif family == "user_mesh":
        if mesh is None:
            raise ValidationError("family 'user_mesh' needs a validated mesh")
        jobs = [(mesh, target, cfg, i) for i in range(cfg.restarts)]
        outcomes = parallel_map(_mesh_restart, jobs, workers)
    else:
        raise ValidationError(f"unknown family {family!r}")
    best = _reduce(outcomes)
    floor = KAZARINOFF_FLOOR if (family == "tetrahedron" and target == "faces") else None
    return ConstantEstimate(
        n=family, angle_deg=90.0, target=target, min_ratio=best.ratio,
        shape=best.shape.to_json(), probe=best.probe.as_list(), seed=cfg.seed,
        restarts=len(outcomes), converged=best.converged, floor=floor,
        counterexample=floor is not None and best.ratio < floor - COUNTEREXAMPLE_TOL,
        evaluations=sum(o.evaluations for o in outcomes),
    )
