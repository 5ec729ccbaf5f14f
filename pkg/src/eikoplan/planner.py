"""Path extraction on a time field, adaptive replanning, and baseline planners.

Planners take a *distance source*: anything mapping configurations (B, d) to
clearances, i.e. a ``DistanceOracle``, a ``SadfModel`` (via ``.distances``) or a
plain callable. Successful paths are always re-validated against an exact oracle.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .distance import DistanceOracle, SpeedModelParams, clip_speed
from .field import SINGULARITY_GUARD, SingularityError
from .fmm import FmmError, GridSpec, backtrack_path, fmm_solve
from .scene import CSpace

log = logging.getLogger(__name__)


class CollisionError(ValueError):
    """Start or goal configuration is in collision."""


def distance_fn(source):
    """Normalize a distance source to ``f(cs) -> clearances``."""
    f = getattr(source, "distances", None)
    return f if f is not None else source


@dataclass
class PlanParams:
    alpha: float = 0.03
    max_steps: int = 500
    converge_eps: float | None = None
    collision_margin: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.converge_eps is None:
            self.converge_eps = 2.0 * self.alpha
        if self.converge_eps < self.alpha:
            raise ValueError("converge_eps must be >= alpha")

    @property
    def resolution(self) -> float:
        return self.alpha / 4


@dataclass
class AdaptiveParams:
    candidates_k: int = 32
    radius0: float = 0.05
    growth: float = 1.5
    max_rounds: int = 3

    def __post_init__(self):
        if self.candidates_k < 1 or self.radius0 <= 0 or self.growth <= 1 or self.max_rounds < 1:
            raise ValueError("need candidates_k >= 1, radius0 > 0, growth > 1, max_rounds >= 1")


@dataclass
class PlanResult:
    path: np.ndarray
    status: str
    reason: str | None = None
    planning_time: float = 0.0
    replanned: bool = False
    length: float = 0.0
    collision_at: np.ndarray | None = None
    scores: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {"status": self.status, "reason": self.reason, "length": self.length,
                "time_ms": 1000.0 * self.planning_time, "replanned": self.replanned,
                "waypoints": np.asarray(self.path).tolist()}


def path_length(space: CSpace, path) -> float:
    path = np.asarray(path, float)
    if len(path) == 0:
        raise ValueError("path must be nonempty")
    if len(path) == 1:
        return 0.0
    return float(np.sum(space.distance(path[:-1], path[1:])))


# ------------------------------------------------------------------ fields


class StraightLineField:
    """Analytic field ``T = |s - g|`` (unit speed) under the c-space metric."""

    def __init__(self, space: CSpace):
        self._space = space

    def space(self) -> CSpace:
        return self._space

    def times(self, s, g) -> np.ndarray:
        return self._space.distance(np.atleast_2d(s), np.atleast_2d(g))

    def evaluate(self, s, g):
        s, g = np.atleast_2d(np.asarray(s, float)), np.atleast_2d(np.asarray(g, float))
        d = self._space.diff(s, g)
        w2 = self._space.weights ** 2
        T = np.linalg.norm(d * self._space.weights, axis=-1)
        safe = np.where(T > 0, T, 1.0)[:, None]
        gs = -w2 * d / safe
        ones = np.ones(len(T))
        return T, gs, -gs, ones, ones


def descent_step(space: CSpace, c: np.ndarray, grad: np.ndarray, speed: np.ndarray, alpha: float,
                 max_len: np.ndarray | None = None) -> np.ndarray:
    """``c - alpha S^2 W^-2 grad``: steepest descent in the c-space metric.

    The metric step length is ``alpha S^2 |grad / W|`` (``alpha S`` on an exact field);
    ``max_len`` caps it per row.
    """
    w = space.weights
    delta = -alpha * (np.asarray(speed, float) ** 2)[:, None] * grad / (w * w)
    if max_len is not None:
        n = np.linalg.norm(delta * w, axis=-1)
        scale = np.where(n > max_len, max_len / np.maximum(n, 1e-300), 1.0)
        delta = delta * scale[:, None]
    return space.wrap(c + delta)


def step_bidirectional(m, s, g, p: PlanParams):
    """One simultaneous descent step of both endpoints; returns ``(s', g', joined)``.

    When the endpoints are within ``converge_eps`` no step is taken and ``joined`` is
    true. Each step is capped at half the current gap so the ends never cross.
    """
    space = m.space()
    s, g = np.asarray(s, float), np.asarray(g, float)
    gap = float(space.distance(s, g))
    if gap <= p.converge_eps:
        return s, g, True
    if gap < SINGULARITY_GUARD:
        raise SingularityError("endpoints closer than the singularity guard")
    _, gs, gg, Ss, Sg = m.evaluate(s[None], g[None])
    cap = np.array([gap / 2])
    s1 = descent_step(space, s[None], gs, Ss, p.alpha, cap)[0]
    g1 = descent_step(space, g[None], gg, Sg, p.alpha, cap)[0]
    return s1, g1, False


# ------------------------------------------------------------------ validation


def first_collision(space: CSpace, dist, path, resolution: float, margin: float = 0.0):
    """Index ``i`` of the first segment ``path[i] -> path[i+1]`` that collides, and the
    first colliding configuration; ``(None, None)`` if the path is free.

    A one-point path is checked as a single configuration (segment index -1).
    """
    path = np.asarray(path, float)
    if len(path) == 1:
        hit = dist(path)[0] <= margin
        return (-1, path[0]) if hit else (None, None)
    pts, seg = [], []
    for i in range(len(path) - 1):
        d = space.densify(path[i], path[i + 1], resolution)
        pts.append(d if i == 0 else d[1:])
        seg.append(np.full(len(pts[-1]), i))
    pts = np.concatenate(pts)
    seg = np.concatenate(seg)
    bad = np.flatnonzero(np.asarray(dist(pts)) <= margin)
    if len(bad) == 0:
        return None, None
    return int(seg[bad[0]]), pts[bad[0]]


def validate_path(space: CSpace, oracle, path, resolution: float, margin: float = 0.0) -> bool:
    return first_collision(space, distance_fn(oracle), path, resolution, margin)[0] is None


def _require_free(dist, s, g, margin):
    d = np.asarray(dist(np.stack([s, g])))
    if d[0] <= margin:
        raise CollisionError("start configuration is in collision")
    if d[1] <= margin:
        raise CollisionError("goal configuration is in collision")


def _done(space, path, status, t0, reason=None, replanned=False, collision_at=None, scores=None):
    path = np.asarray(path, float)
    return PlanResult(path, status, reason, time.perf_counter() - t0, replanned,
                      path_length(space, path) if status == "success" else 0.0, collision_at,
                      scores or [])


# ------------------------------------------------------------------ neural planner


def descend(m, s, g, p: PlanParams) -> tuple[np.ndarray, bool]:
    """Run ``step_bidirectional`` until join or budget; returns ``(path, joined)``."""
    fwd, bwd = [np.asarray(s, float)], [np.asarray(g, float)]
    joined = False
    for _ in range(p.max_steps):
        s1, g1, joined = step_bidirectional(m, fwd[-1], bwd[-1], p)
        if joined:
            break
        fwd.append(s1)
        bwd.append(g1)
    else:
        joined = float(m.space().distance(fwd[-1], bwd[-1])) <= p.converge_eps
    return np.asarray(fwd + bwd[::-1]), joined


def plan(m, s, g, p: PlanParams = PlanParams(), source=None, exact=None,
         adaptive: AdaptiveParams | None = None, rng: np.random.Generator | None = None,
         _depth: int = 0) -> PlanResult:
    """Bidirectional gradient descent on ``m`` from ``s`` and ``g``.

    ``source`` drives collision checks while planning (e.g. a learned SADF); ``exact``
    validates the final path and defaults to ``source``. With ``adaptive`` set, a
    collided path is handed to ``adaptive_replan``.
    """
    t0 = time.perf_counter()
    space = m.space()
    s, g = space.wrap(np.asarray(s, float)), space.wrap(np.asarray(g, float))
    if source is None:
        raise ValueError("plan needs a distance source")
    dist = distance_fn(source)
    check = distance_fn(exact if exact is not None else source)
    if _depth == 0:
        _require_free(check, s, g, p.collision_margin)
    if float(space.distance(s, g)) == 0.0:
        return _done(space, s[None], "success", t0)
    path, joined = descend(m, s, g, p)
    if not joined:
        return _done(space, path, "failure", t0, "no-convergence")
    seg, hit = first_collision(space, dist, path, p.resolution, p.collision_margin)
    if seg is None and check is not dist:
        seg, hit = first_collision(space, check, path, p.resolution, p.collision_margin)
    if seg is None:
        return _done(space, path, "success", t0)
    if adaptive is None:
        return _done(space, path, "failure", t0, "collision", collision_at=hit)
    res = adaptive_replan(m, s, g, path, adaptive, source, p, exact, rng, _depth)
    res.planning_time = time.perf_counter() - t0
    return res


def sample_ball(space: CSpace, center, radius: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` points uniform in the metric ball, by rejection from its bounding cube."""
    out = []
    d = space.dim
    while sum(len(o) for o in out) < k:
        u = rng.uniform(-1.0, 1.0, size=(2 * k, d))
        u = u[np.linalg.norm(u, axis=1) <= 1.0]
        out.append(u)
    u = np.concatenate(out)[:k]
    return space.wrap(np.asarray(center, float) + radius * u / space.weights)


def adaptive_replan(m, s, g, collided_path, a: AdaptiveParams, source, p: PlanParams = PlanParams(),
                    exact=None, rng: np.random.Generator | None = None, _depth: int = 0) -> PlanResult:
    """Escape a collided path through the best free candidate near its free prefix.

    Candidates are scored by ``T(s, c) + T(c, g)``; the lowest score wins (lowest index
    on ties). Sub-plans run one recursion level deep and fall back to a validated
    straight segment below that.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(0) if rng is None else rng
    space = m.space()
    dist = distance_fn(source)
    check = distance_fn(exact if exact is not None else source)
    path = np.asarray(collided_path, float)
    seg, _ = first_collision(space, dist, path, p.resolution, p.collision_margin)
    if seg is None:
        seg, _ = first_collision(space, check, path, p.resolution, p.collision_margin)
    prefix = path[:max(seg, 0) + 1] if seg is not None else path
    v = prefix[rng.integers(len(prefix))]
    radius = a.radius0
    scores: list[np.ndarray] = []
    for _ in range(a.max_rounds):
        cand = sample_ball(space, v, radius, a.candidates_k, rng)
        cand = cand[space.contains(cand)]
        if len(cand):
            cand = cand[np.asarray(dist(cand)) > p.collision_margin]
        if len(cand) == 0:
            radius *= a.growth
            continue
        n = len(cand)
        score = np.asarray(m.times(np.repeat(s[None], n, 0), cand)) + np.asarray(
            m.times(cand, np.repeat(g[None], n, 0)))
        scores.append(score)
        c = cand[int(np.argmin(score))]
        log.debug("replan: %d candidates at r=%.3g, best score %.4g", n, radius, score.min())
        first = _subplan(m, s, c, p, source, exact, a, rng, _depth)
        second = _subplan(m, c, g, p, source, exact, a, rng, _depth) if first is not None else None
        if first is None or second is None:
            return _done(space, path, "failure", t0, "replan-failed", replanned=True, scores=scores)
        full = np.concatenate([first, second[1:]])
        if first_collision(space, check, full, p.resolution, p.collision_margin)[0] is not None:
            return _done(space, full, "failure", t0, "replan-failed", replanned=True, scores=scores)
        return _done(space, full, "success", t0, replanned=True, scores=scores)
    return _done(space, path, "failure", t0, "local-minimum", replanned=True, scores=scores)


def _subplan(m, a_, b_, p, source, exact, ap, rng, depth):
    if depth < 1:
        res = plan(m, a_, b_, p, source, exact, ap, rng, _depth=depth + 1)
        return res.path if res.success else None
    seg = np.stack([a_, b_])
    check = distance_fn(exact if exact is not None else source)
    if first_collision(m.space(), check, seg, p.resolution, p.collision_margin)[0] is None:
        return seg
    res = plan(m, a_, b_, p, source, exact, None, rng, _depth=depth + 1)
    return res.path if res.success else None


# ------------------------------------------------------------------ baselines


def rrt_connect(space: CSpace, source, s, g, step: float = 0.05, time_limit: float = 10.0,
                seed: int = 0, max_iter: int = 20000, resolution: float | None = None,
                margin: float = 0.0) -> PlanResult:
    """Bidirectional RRT with greedy connect; no shortcut smoothing.

    ``time_limit=None`` bounds work by ``max_iter`` alone, which keeps results
    machine-independent.
    """
    t0 = time.perf_counter()
    dist = distance_fn(source)
    s, g = space.wrap(np.asarray(s, float)), space.wrap(np.asarray(g, float))
    _require_free(dist, s, g, margin)
    res = resolution or step / 4
    if float(space.distance(s, g)) == 0.0:
        return _done(space, s[None], "success", t0)
    rng = np.random.default_rng(seed)

    def free_edge(a, b):
        return bool(np.all(np.asarray(dist(space.densify(a, b, res))) > margin))

    trees = [([s], [-1]), ([g], [-1])]

    def nearest(tree, q):
        nodes = np.asarray(tree[0])
        return int(np.argmin(space.distance(nodes, q[None])))

    def steer(a, b):
        d = float(space.distance(a, b))
        return b if d <= step else space.interpolate(a, b, step / d)

    def extend(tree, q):
        i = nearest(tree, q)
        new = steer(tree[0][i], q)
        if not free_edge(tree[0][i], new):
            return None
        tree[0].append(new)
        tree[1].append(i)
        return len(tree[0]) - 1

    def trace(tree, i):
        out = []
        while i != -1:
            out.append(tree[0][i])
            i = tree[1][i]
        return out

    for it in range(max_iter):
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            return _done(space, [s], "failure", t0, "timeout")
        a, b = trees[it % 2], trees[(it + 1) % 2]
        q = space.sample(rng, 1)[0]
        i = extend(a, q)
        if i is None:
            continue
        target = a[0][i]
        while True:  # greedy connect
            j = extend(b, target)
            if j is None:
                break
            if float(space.distance(b[0][j], target)) < 1e-12:
                pa, pb = trace(a, i), trace(b, j)
                path = pa[::-1] + pb[1:]
                if a is not trees[0]:
                    path = path[::-1]
                return _done(space, path, "success", t0)
    return _done(space, [s], "failure", t0, "timeout")


class FmmPlanner:
    """FMM baseline with the clip-speed grid computed once per scene and robot."""

    def __init__(self, space: CSpace, source, dims, speed: SpeedModelParams = SpeedModelParams(),
                 margin: float = 0.0):
        self.space = space
        self.spec = GridSpec.for_space(space, dims)
        d = np.asarray(distance_fn(source)(self.spec.centers().reshape(-1, space.dim)), float)
        d = d.reshape(self.spec.dims)
        self.speed = np.where(d > margin, clip_speed(d, speed), 0.0)

    def plan(self, s, g, exact=None, margin: float = 0.0, resolution: float | None = None) -> PlanResult:
        t0 = time.perf_counter()
        s, g = self.space.wrap(np.asarray(s, float)), self.space.wrap(np.asarray(g, float))
        if float(self.space.distance(s, g)) == 0.0:
            return _done(self.space, s[None], "success", t0)
        try:
            tg = fmm_solve(self.spec, self.speed, s, init_radius=4.0)
            back = backtrack_path(tg, g)
        except FmmError as e:
            return _done(self.space, [s], "failure", t0, "unreachable" if "unreachable" in str(e)
                         or "blocked" in str(e) else "stall")
        path = np.concatenate([s[None], np.asarray(back[::-1])])
        path[-1] = g
        if exact is not None:
            res = resolution or float(self.spec.metric_spacing.min()) / 4
            if first_collision(self.space, distance_fn(exact), path, res, margin)[0] is not None:
                return _done(self.space, path, "failure", t0, "collision")
        return _done(self.space, path, "success", t0)


def fmm_plan(space: CSpace, source, s, g, dims, exact=None, speed: SpeedModelParams = SpeedModelParams(),
             margin: float = 0.0) -> PlanResult:
    return FmmPlanner(space, source, dims, speed, margin).plan(s, g, exact, margin)


def straight_line_plan(space: CSpace, source, s, g, resolution: float, margin: float = 0.0) -> PlanResult:
    """Linear interpolation, accepted only if the densified segment is free."""
    t0 = time.perf_counter()
    path = np.stack([space.wrap(np.asarray(s, float)), space.wrap(np.asarray(g, float))])
    if first_collision(space, distance_fn(source), path, resolution, margin)[0] is None:
        return _done(space, path, "success", t0)
    return _done(space, path, "failure", t0, "collision")
