"""Exact shape-aware distance oracle and the ground-truth speed models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import JOINT_2LINK, SE2, CSpace, EnvSdfGrid, RobotShape, cspace_for


@dataclass(frozen=True)
class SpeedModelParams:
    s_const: float = 1.0
    d_min: float = 0.02
    d_max: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.d_min < self.d_max) or self.s_const <= 0:
            raise ValueError("need 0 <= d_min < d_max and s_const > 0")

    @property
    def s_min(self) -> float:
        return self.s_const * self.d_min / self.d_max


@dataclass(frozen=True)
class ManifoldSpeedParams:
    d_max: float = 0.2
    beta: float = 1.0

    def __post_init__(self):
        if self.d_max <= 0 or self.beta <= 0:
            raise ValueError("d_max and beta must be positive")


def clip_speed(d, p: SpeedModelParams = SpeedModelParams()):
    """Clearance-proportional speed, clamped to ``[d_min, d_max]`` before scaling."""
    return p.s_const / p.d_max * np.clip(d, p.d_min, p.d_max)


def manifold_speed(d, p: ManifoldSpeedParams = ManifoldSpeedParams()):
    """Gaussian falloff of speed with distance to a constraint manifold."""
    dm = np.minimum(d, p.d_max)
    return np.exp(-dm ** 2 / (p.beta * p.d_max ** 2))


def transform_points(space: CSpace, pts: np.ndarray, cs: np.ndarray) -> np.ndarray:
    """World coordinates of robot-frame ``pts`` (P, 2) under rigid configs ``cs`` (B, d)."""
    cs = np.atleast_2d(cs)
    if space.tag == SE2:
        c, s = np.cos(cs[:, 2]), np.sin(cs[:, 2])
        x = c[:, None] * pts[None, :, 0] - s[:, None] * pts[None, :, 1] + cs[:, 0, None]
        y = s[:, None] * pts[None, :, 0] + c[:, None] * pts[None, :, 1] + cs[:, 1, None]
        return np.stack([x, y], axis=-1)
    return pts[None] + cs[:, None, :2]


def link_points(robot: RobotShape, cs: np.ndarray, which: str = "dense") -> list[np.ndarray]:
    """World points of each arm link for joint configs ``cs`` (B, n_links)."""
    cs = np.atleast_2d(cs)
    base = np.asarray(robot.base, float)
    angle = np.zeros(len(cs))
    origin = np.broadcast_to(base, (len(cs), 2)).copy()
    out = []
    for i, link in enumerate(robot.links):
        angle = angle + cs[:, i]
        c, s = np.cos(angle), np.sin(angle)
        p = link.dense_points if which == "dense" else link.sparse_points
        x = c[:, None] * p[None, :, 0] - s[:, None] * p[None, :, 1] + origin[:, 0, None]
        y = s[:, None] * p[None, :, 0] + c[:, None] * p[None, :, 1] + origin[:, 1, None]
        out.append(np.stack([x, y], axis=-1))
        origin = origin + link.length * np.stack([c, s], axis=1)
    return out


class DistanceOracle:
    """Brute-force minimum of environment SDF over transformed robot surface points.

    ``exact=True`` evaluates the analytic workspace distance instead of the grid;
    it is slower and used by tests that need exactness.
    """

    def __init__(self, env: EnvSdfGrid, shape: RobotShape, mode: str = "dense",
                 space: CSpace | None = None, exact: bool = False, chunk: int = 2048):
        if mode not in ("dense", "sparse"):
            raise ValueError("mode must be 'dense' or 'sparse'")
        self.env = env
        self.shape = shape
        self.mode = mode
        self.space = space or cspace_for(shape)
        self.exact = exact
        self.chunk = chunk

    def with_mode(self, mode: str) -> "DistanceOracle":
        return DistanceOracle(self.env, self.shape, mode, self.space, self.exact, self.chunk)

    def _env(self, pts: np.ndarray) -> np.ndarray:
        if self.exact:
            return self.env.exact(pts)
        return self.env.query(pts)[0]

    def per_link(self, cs: np.ndarray) -> np.ndarray:
        """(B, n_links) minimum clearance of each link; rigid robots have one link."""
        cs = np.atleast_2d(np.asarray(cs, float))
        out = []
        for lo in range(0, len(cs), self.chunk):
            block = cs[lo:lo + self.chunk]
            if self.space.tag == JOINT_2LINK:
                groups = link_points(self.shape, block, self.mode)
            else:
                pts = self.shape.dense_points if self.mode == "dense" else self.shape.sparse_points
                groups = [transform_points(self.space, pts, block)]
            out.append(np.stack([self._env(g).min(axis=1) for g in groups], axis=1))
        if not out:
            return np.zeros((0, max(1, len(self.shape.links))))
        return np.concatenate(out)

    def __call__(self, cs: np.ndarray) -> np.ndarray:
        return self.per_link(cs).min(axis=1)


def oracle_sadf(o: DistanceOracle, c) -> float:
    return float(o(np.asarray(c, float)[None])[0])


def articulated_sadf(o: DistanceOracle, c) -> float:
    """Union over links: the minimum of per-link clearances."""
    return float(o.per_link(np.asarray(c, float)[None]).min())


def collision_check(o, c, margin: float = 0.0) -> bool:
    """True when clearance is below ``margin``; a clearance equal to it counts as colliding."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    return bool(o(np.asarray(c, float)[None])[0] <= margin)


def batch_oracle(o: DistanceOracle, cs) -> np.ndarray:
    cs = np.asarray(cs, float)
    if len(cs) == 0:
        return np.zeros(0)
    return o(cs)
