"""Workspace geometry, robot shapes, configuration spaces and environment SDF grids.

All geometry is planar. Workspaces are normalized to the unit box
``[-0.5, 0.5]^2``; the box boundary itself acts as a wall, so signed
distances are measured to the nearest obstacle *or* bound.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SE2 = "SE2"
JOINT_2LINK = "JOINT_2LINK"
POINT2D = "POINT2D"
SPACE_TAGS = (SE2, JOINT_2LINK, POINT2D)

N_DENSE = 1024
N_SPARSE = 32


class SceneError(ValueError):
    """Raised for malformed scene/robot documents or invalid geometry."""


# --------------------------------------------------------------------------
# obstacles


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - np.asarray(self.center), axis=-1) - self.radius

    def vertices_like(self) -> np.ndarray:
        return np.asarray([self.center])

    def transformed(self, scale: float, shift: np.ndarray) -> "Circle":
        c = (np.asarray(self.center) + shift) * scale
        return Circle((float(c[0]), float(c[1])), self.radius * scale)

    def to_dict(self) -> dict:
        return {"type": "circle", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Exact distance to the boundary, negative inside (even-odd rule)."""
        pts = np.asarray(pts, dtype=float)
        v = self.array
        a = v
        b = np.roll(v, -1, axis=0)
        ab = b - a  # (E, 2)
        ap = pts[..., None, :] - a  # (..., E, 2)
        denom = np.einsum("ej,ej->e", ab, ab)
        t = np.clip(np.einsum("...ej,ej->...e", ap, ab) / denom, 0.0, 1.0)
        closest = a + t[..., None] * ab
        dist = np.linalg.norm(pts[..., None, :] - closest, axis=-1).min(axis=-1)
        return np.where(_even_odd(pts, a, b), -dist, dist)

    def vertices_like(self) -> np.ndarray:
        return self.array

    def transformed(self, scale: float, shift: np.ndarray) -> "Polygon":
        v = (self.array + shift) * scale
        return Polygon(tuple((float(x), float(y)) for x, y in v))

    def to_dict(self) -> dict:
        return {"type": "polygon", "vertices": [list(p) for p in self.vertices]}


def _even_odd(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    px = pts[..., None, 0]
    py = pts[..., None, 1]
    crosses = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = a[:, 0] + (py - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    hits = crosses & (px < x_int)
    return (hits.sum(axis=-1) % 2) == 1


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
                and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12)

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 != 0 and d3 * d4 != 0:
        return True
    return ((d1 == 0 and on_seg(q1, q2, p1)) or (d2 == 0 and on_seg(q1, q2, p2))
            or (d3 == 0 and on_seg(p1, p2, q1)) or (d4 == 0 and on_seg(p1, p2, q2)))


def polygon_is_simple(vertices: np.ndarray) -> bool:
    n = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


Obstacle = Circle | Polygon


# --------------------------------------------------------------------------
# workspace


@dataclass(frozen=True)
class Workspace:
    name: str
    lower: tuple[float, float]
    upper: tuple[float, float]
    obstacles: tuple[Obstacle, ...] = ()

    def __post_init__(self):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise SceneError("bounds must be finite")
        for i, ob in enumerate(self.obstacles):
            v = ob.vertices_like()
            if np.any(v < lo - 1e-9) or np.any(v > hi + 1e-9):
                raise SceneError(f"obstacle {i} lies outside the workspace bounds")
            if isinstance(ob, Polygon):
                if len(ob.vertices) < 3:
                    raise SceneError(f"obstacle {i}: polygon needs at least 3 vertices")
                if not polygon_is_simple(ob.array):
                    raise SceneError(f"obstacle {i}: polygon is self-intersecting")
            elif ob.radius <= 0:
                raise SceneError(f"obstacle {i}: circle radius must be positive")

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Exact signed distance to the union of obstacles and the bounding walls."""
        pts = np.asarray(pts, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        inside = np.minimum(pts - lo, hi - pts)
        # distance to the box boundary, negative outside the box
        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        d_box = np.where(np.all(inside >= 0, axis=-1), inside.min(axis=-1),
                         -np.linalg.norm(outside, axis=-1))
        d = d_box
        for ob in self.obstacles:
            d = np.minimum(d, ob.signed_distance(pts))
        return d

    def to_dict(self) -> dict:
        return {"name": self.name,
                "bounds": {"min": list(self.lower), "max": list(self.upper)},
                "obstacles": [o.to_dict() for o in self.obstacles]}


def workspace_from_dict(doc: dict) -> Workspace:
    try:
        name = str(doc.get("name", "scene"))
        b = doc["bounds"]
        lower = tuple(float(x) for x in b["min"])
        upper = tuple(float(x) for x in b["max"])
        if len(lower) != 2 or len(upper) != 2:
            raise SceneError("bounds must be 2D")
        obstacles: list[Obstacle] = []
        for i, ob in enumerate(doc.get("obstacles", [])):
            kind = ob.get("type")
            if kind == "circle":
                c = ob["center"]
                obstacles.append(Circle((float(c[0]), float(c[1])), float(ob["radius"])))
            elif kind == "polygon":
                obstacles.append(Polygon(tuple((float(x), float(y)) for x, y in ob["vertices"])))
            else:
                raise SceneError(f"obstacle {i}: unknown type {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError(f"invalid scene document: {exc}") from exc
    return Workspace(name, lower, upper, tuple(obstacles))


def load_document(path: str | Path) -> dict:
    """Parse a JSON document; errors name the offending line."""
    path = Path(path)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def load_scene(path: str | Path) -> Workspace:
    return workspace_from_dict(load_document(path))


def save_scene(w: Workspace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(w.to_dict(), indent=2))


def normalize_workspace(w: Workspace) -> tuple[Workspace, float]:
    """Similarity-map ``w`` so its bounds become the unit box centred at the origin.

    The returned scale multiplies original lengths into normalized ones. Non-square
    bounds are scaled by the longer side and centred.
    """
    ext = w.extent
    if np.any(ext <= 0):
        raise SceneError("degenerate workspace bounds")
    scale = 1.0 / float(ext.max())
    shift = -(np.asarray(w.lower) + np.asarray(w.upper)) / 2.0
    half = ext * scale / 2.0
    obstacles = tuple(o.transformed(scale, shift) for o in w.obstacles)
    nw = Workspace(w.name, (float(-half[0]), float(-half[1])), (float(half[0]), float(half[1])), obstacles)
    return nw, scale


def denormalize_points(pts: np.ndarray, w: Workspace, scale: float) -> np.ndarray:
    center = (np.asarray(w.lower) + np.asarray(w.upper)) / 2.0
    return np.asarray(pts) / scale + center


# --------------------------------------------------------------------------
# environment SDF grid

GRID_MAGIC = {"sdf": b"ESDF", "time": b"TGRD"}


@dataclass(frozen=True, eq=False)
class EnvSdfGrid:
    """Cell-centred signed distance samples of a normalized workspace."""

    resolution: int
    origin: np.ndarray  # centre of cell (0, 0)
    spacing: float
    values: np.ndarray  # (res, res) indexed [ix, iy]
    lower: np.ndarray = field(default_factory=lambda: np.array([-0.5, -0.5]))
    upper: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    workspace: Workspace | None = None

    def centers(self) -> np.ndarray:
        idx = np.arange(self.resolution)
        xs = self.origin[0] + idx * self.spacing
        ys = self.origin[1] + idx * self.spacing
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def query(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear interpolation at ``pts`` (..., 2).

        Returns ``(values, clamped)``. Points outside the bounds are clamped onto the
        boundary and the outside distance is subtracted, so they read as penetration.
        Within the half-cell band between the outer cell centres and the bounds the
        interpolant extrapolates linearly.
        """
        pts = np.asarray(pts, dtype=float)
        clamped_pts = np.clip(pts, self.lower, self.upper)
        clamped = np.any(clamped_pts != pts, axis=-1)
        u = (clamped_pts - self.origin) / self.spacing
        n = self.resolution
        i0 = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        f = u - i0
        v = self.values
        ix, iy = i0[..., 0], i0[..., 1]
        fx, fy = f[..., 0], f[..., 1]
        val = ((1 - fx) * (1 - fy) * v[ix, iy] + fx * (1 - fy) * v[ix + 1, iy]
               + (1 - fx) * fy * v[ix, iy + 1] + fx * fy * v[ix + 1, iy + 1])
        if np.any(clamped):
            val = val - np.linalg.norm(pts - clamped_pts, axis=-1)
        return val, clamped

    def exact(self, pts: np.ndarray) -> np.ndarray:
        if self.workspace is None:
            raise ValueError("grid has no attached workspace for exact queries")
        return self.workspace.signed_distance(pts)


def build_env_sdf(w: Workspace, resolution: int = 256) -> EnvSdfGrid:
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    ext = w.extent
    spacing = float(ext.max()) / resolution
    lower = np.asarray(w.lower, dtype=float)
    origin = lower + spacing / 2.0
    idx = np.arange(resolution)
    X, Y = np.meshgrid(origin[0] + idx * spacing, origin[1] + idx * spacing, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    values = np.empty((resolution, resolution))
    for row in range(resolution):
        values[row] = w.signed_distance(pts[row])
    return EnvSdfGrid(resolution, origin, spacing, values, lower, np.asarray(w.upper, dtype=float), w)


def env_sdf_query(g: EnvSdfGrid, p: Sequence[float]) -> tuple[float, bool]:
    """Single-point query; the flag is True when ``p`` had to be clamped."""
    val, clamped = g.query(np.asarray(p, dtype=float)[None])
    if clamped[0]:
        log.warning("env_sdf_query: point %s outside bounds, clamped", tuple(p))
    return float(val[0]), bool(clamped[0])


def save_grid(path: str | Path, values: np.ndarray, origin: Sequence[float],
              spacing: Sequence[float], kind: str = "sdf") -> None:
    """Flat little-endian block: magic, version, ndim, dims, origin, spacing, float32 row-major."""
    values = np.asarray(values)
    nd = values.ndim
    head = GRID_MAGIC[kind] + struct.pack("<II", 1, nd)
    head += struct.pack(f"<{nd}I", *values.shape)
    head += struct.pack(f"<{nd}d", *origin) + struct.pack(f"<{nd}d", *spacing)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_grid(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    data = Path(path).read_bytes()
    magic = data[:4]
    kinds = {v: k for k, v in GRID_MAGIC.items()}
    if magic not in kinds:
        raise SceneError(f"{path}: bad grid magic {magic!r}")
    version, nd = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise SceneError(f"{path}: unsupported grid version {version}")
    off = 12
    dims = struct.unpack_from(f"<{nd}I", data, off)
    off += 4 * nd
    origin = np.array(struct.unpack_from(f"<{nd}d", data, off))
    off += 8 * nd
    spacing = np.array(struct.unpack_from(f"<{nd}d", data, off))
    off += 8 * nd
    values = np.frombuffer(data, dtype="<f4", offset=off).astype(np.float64).reshape(dims)
    return values, origin, spacing, kinds[magic]


def save_env_sdf(g: EnvSdfGrid, path: str | Path) -> None:
    save_grid(path, g.values, g.origin, [g.spacing, g.spacing], "sdf")


def load_env_sdf(path: str | Path) -> EnvSdfGrid:
    values, origin, spacing, kind = load_grid(path)
    if kind != "sdf" or values.ndim != 2:
        raise SceneError(f"{path}: not an environment SDF grid")
    res = values.shape[0]
    lower = origin - spacing / 2
    upper = lower + spacing * res
    return EnvSdfGrid(res, origin, float(spacing[0]), values, lower, upper)


# --------------------------------------------------------------------------
# rigid transforms and robots


@dataclass(frozen=True)
class RigidTransform:
    angle: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self * other``: apply ``other`` first."""
        t = self.rotation @ np.asarray(other.translation) + np.asarray(self.translation)
        return RigidTransform(self.angle + other.angle, (float(t[0]), float(t[1])))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts) @ self.rotation.T + np.asarray(self.translation)


@dataclass(frozen=True, eq=False)
class Link:
    dense_points: np.ndarray
    sparse_points: np.ndarray
    length: float


@dataclass(frozen=True, eq=False)
class RobotShape:
    name: str
    dense_points: np.ndarray
    sparse_points: np.ndarray
    links: tuple[Link, ...] = ()
    base: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if len(self.dense_points) != N_DENSE or len(self.sparse_points) != N_SPARSE:
            raise SceneError(f"robot {self.name!r}: need {N_DENSE} dense and {N_SPARSE} sparse points")
        d = np.linalg.norm(self.sparse_points[:, None] - self.dense_points[None], axis=-1).min(axis=1)
        if d.max() > 1e-9:
            raise SceneError(f"robot {self.name!r}: sparse points must be a subset of dense points")

    @property
    def articulated(self) -> bool:
        return bool(self.links)

    @property
    def radius(self) -> float:
        """Circumscribed radius about the robot origin."""
        if self.articulated:
            return float(sum(l.length for l in self.links))
        return float(np.linalg.norm(self.dense_points, axis=1).max())

    @property
    def link_lengths(self) -> tuple[float, ...]:
        return tuple(l.length for l in self.links)

    def to_dict(self) -> dict:
        if self.articulated:
            return {"name": self.name, "base": list(self.base),
                    "link_lengths": list(self.link_lengths),
                    "links": [{"points_dense": l.dense_points.tolist(),
                               "points_sparse": l.sparse_points.tolist()} for l in self.links]}
        return {"name": self.name, "points_dense": self.dense_points.tolist(),
                "points_sparse": self.sparse_points.tolist()}


def farthest_point_sample(pts: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    """Indices of ``k`` farthest-point samples; ties resolve to the lowest index."""
    n = len(pts)
    chosen = [start]
    dist = np.linalg.norm(pts - pts[start], axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.asarray(chosen[:k]) if n else np.zeros(0, dtype=int)


def sample_outline(vertices: np.ndarray, n: int = N_DENSE, closed: bool = True) -> np.ndarray:
    """``n`` points evenly spaced by arc length along a polyline."""
    v = np.asarray(vertices, dtype=float)
    if closed:
        v = np.vstack([v, v[:1]])
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        return np.repeat(v[:1], n, axis=0)
    s = np.linspace(0.0, total, n, endpoint=not closed)
    out = np.empty((n, 2))
    for j in range(2):
        out[:, j] = np.interp(s, cum, v[:, j])
    return out


def shape_from_dense(name: str, dense: np.ndarray) -> RobotShape:
    idx = farthest_point_sample(dense, N_SPARSE)
    return RobotShape(name, dense, dense[idx].copy())


def triangle_robot(radius: float = 0.04) -> RobotShape:
    ang = np.pi / 2 + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    verts = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return shape_from_dense("triangle", sample_outline(verts))


def line_robot(length: float = 0.08) -> RobotShape:
    verts = np.array([[-length / 2, 0.0], [length / 2, 0.0]])
    return shape_from_dense("line", sample_outline(verts, closed=False))


def disc_robot(radius: float = 0.03) -> RobotShape:
    ang = np.linspace(0, 2 * np.pi, N_DENSE, endpoint=False)
    dense = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return shape_from_dense("disc", dense)


def point_robot() -> RobotShape:
    z = np.zeros((N_DENSE, 2))
    return RobotShape("point", z, np.zeros((N_SPARSE, 2)))


def two_link_arm(lengths: tuple[float, float] = (0.2, 0.15), base: tuple[float, float] = (0.0, 0.0)) -> RobotShape:
    links = []
    for L in lengths:
        dense = sample_outline(np.array([[0.0, 0.0], [L, 0.0]]), closed=False)
        sparse = dense[farthest_point_sample(dense, N_SPARSE)]
        links.append(Link(dense, sparse, float(L)))
    all_dense = links[0].dense_points
    return RobotShape("arm2", all_dense, links[0].sparse_points, tuple(links), base)


BUILTIN_ROBOTS = {
    "triangle": triangle_robot,
    "line": line_robot,
    "disc": disc_robot,
    "point": point_robot,
    "arm2": two_link_arm,
}


def robot_from_dict(doc: dict) -> RobotShape:
    name = str(doc.get("name", "robot"))
    try:
        if "links" in doc:
            lengths = [float(x) for x in doc["link_lengths"]]
            if len(lengths) != len(doc["links"]):
                raise SceneError("link_lengths must match links")
            links = tuple(Link(np.asarray(l["points_dense"], float), np.asarray(l["points_sparse"], float), L)
                          for l, L in zip(doc["links"], lengths))
            base = tuple(float(x) for x in doc.get("base", (0.0, 0.0)))
            return RobotShape(name, links[0].dense_points, links[0].sparse_points, links, base)
        return RobotShape(name, np.asarray(doc["points_dense"], float), np.asarray(doc["points_sparse"], float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError(f"invalid robot document: {exc}") from exc


def load_robot(spec: str | Path) -> RobotShape:
    """Load a robot from a JSON file or by builtin name (``triangle``, ``line``, ...)."""
    if str(spec) in BUILTIN_ROBOTS:
        return BUILTIN_ROBOTS[str(spec)]()
    return robot_from_dict(load_document(spec))


def apply_transform(shape: RobotShape, h: RigidTransform, which: str = "dense") -> np.ndarray:
    pts = shape.dense_points if which == "dense" else shape.sparse_points
    return h.apply(pts)


def forward_kinematics(joints: Sequence[float], lengths: Sequence[float],
                       base: Sequence[float] = (0.0, 0.0)) -> list[RigidTransform]:
    """Per-link world transforms of a planar serial chain rooted at ``base``."""
    if len(joints) != len(lengths):
        raise ValueError("need one joint angle per link")
    out = []
    h = RigidTransform(0.0, (float(base[0]), float(base[1])))
    for q, L in zip(joints, lengths):
        h = h.compose(RigidTransform(float(q)))
        out.append(h)
        h = h.compose(RigidTransform(0.0, (float(L), 0.0)))
    return out


# --------------------------------------------------------------------------
# configuration spaces


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True, eq=False)
class CSpace:
    """Box-shaped c-space with optional periodic axes and a weighted Euclidean metric.

    ``weights`` convert coordinate differences to metric length; periodic axes are
    angles wrapped to ``[-pi, pi)``.
    """

    tag: str
    lower: np.ndarray
    upper: np.ndarray
    periodic: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.lower)

    def wrap(self, c: np.ndarray) -> np.ndarray:
        c = np.array(c, dtype=float, copy=True)
        if np.any(self.periodic):
            c[..., self.periodic] = wrap_angle(c[..., self.periodic])
        return c

    def diff(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Shortest coordinate difference ``b - a``."""
        d = np.asarray(b, float) - np.asarray(a, float)
        if np.any(self.periodic):
            d[..., self.periodic] = wrap_angle(d[..., self.periodic])
        return d

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.diff(a, b) * self.weights, axis=-1)

    def interpolate(self, a: np.ndarray, b: np.ndarray, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        return self.wrap(np.asarray(a, float) + t * self.diff(a, b))

    def densify(self, a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
        n = max(1, int(math.ceil(float(self.distance(a, b)) / resolution)))
        return self.interpolate(a, b, np.linspace(0.0, 1.0, n + 1))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def contains(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c)
        ok = np.all(np.isfinite(c), axis=-1)
        np_ = ~self.periodic
        return ok & np.all((c[..., np_] >= self.lower[np_] - 1e-12) & (c[..., np_] <= self.upper[np_] + 1e-12), axis=-1)


def cspace_for(robot: RobotShape, workspace: Workspace | None = None,
               angular_weight: float | None = None) -> CSpace:
    """C-space matching a robot: SE2 for rigid shapes, joints for arms, POINT2D for points
    and discs (whose heading is irrelevant).

    Angular weights default to the largest displacement a unit rotation can cause
    (circumscribed radius for SE2, distal reach per joint for arms).
    """
    lo = np.asarray(workspace.lower if workspace else (-0.5, -0.5), float)
    hi = np.asarray(workspace.upper if workspace else (0.5, 0.5), float)
    if robot.articulated:
        lengths = np.asarray(robot.link_lengths)
        reach = np.cumsum(lengths[::-1])[::-1]
        w = reach if angular_weight is None else np.full(len(lengths), angular_weight)
        n = len(lengths)
        return CSpace(JOINT_2LINK, np.full(n, -np.pi), np.full(n, np.pi), np.ones(n, bool), np.asarray(w, float))
    if robot.radius == 0.0 or _rotation_invariant(robot):
        return CSpace(POINT2D, lo, hi, np.zeros(2, bool), np.ones(2))
    w_theta = robot.radius if angular_weight is None else angular_weight
    return CSpace(SE2, np.append(lo, -np.pi), np.append(hi, np.pi),
                  np.array([False, False, True]), np.array([1.0, 1.0, float(w_theta)]))


def _rotation_invariant(robot: RobotShape) -> bool:
    # a disc centred on the robot origin looks the same at every heading
    r = np.linalg.norm(robot.dense_points, axis=1)
    return bool(np.ptp(r) < 1e-9 and np.allclose(robot.dense_points.mean(axis=0), 0.0, atol=1e-9))


def config_transforms(space: CSpace, robot: RobotShape, c: np.ndarray) -> list[RigidTransform]:
    c = np.asarray(c, float)
    if space.tag == JOINT_2LINK:
        return forward_kinematics(c, robot.link_lengths, robot.base)
    if space.tag == SE2:
        return [RigidTransform(float(c[2]), (float(c[0]), float(c[1])))]
    return [RigidTransform(0.0, (float(c[0]), float(c[1])))]


BUILTIN_SCENES = ("empty", "fixed", "cluttered", "trap")


def load_workspace(spec: str | Path) -> Workspace:
    """Normalized workspace from a JSON path or a bundled scene name."""
    if str(spec) in BUILTIN_SCENES:
        from importlib import resources

        text = resources.files("eikoplan.scenes").joinpath(f"{spec}.json").read_text()
        w = workspace_from_dict(json.loads(text))
    else:
        w = load_scene(spec)
    return normalize_workspace(w)[0]
