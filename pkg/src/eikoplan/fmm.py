"""First-order Fast Marching on a (possibly periodic) Cartesian c-space grid."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

BLOCKED_SPEED = 1e-6

FAR, NARROW, ACCEPTED = 0, 1, 2


class FmmError(RuntimeError):
    pass


class DescentStall(FmmError):
    pass


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Cell-centred grid; ``origin`` is the centre of cell 0 on every axis.

    ``weights`` scale coordinate spacing into metric length (see ``CSpace``).
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]
    periodic: tuple[bool, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if any(d < 4 for d in self.dims):
            raise ValueError("all grid dims must be >= 4")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacing must be positive")
        if not (len(self.dims) == len(self.spacing) == len(self.origin) == len(self.periodic)):
            raise ValueError("grid spec fields must share one dimension")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def w(self) -> np.ndarray:
        return np.ones(self.ndim) if self.weights is None else np.asarray(self.weights, float)

    @property
    def metric_spacing(self) -> np.ndarray:
        return np.asarray(self.spacing) * self.w

    @classmethod
    def for_space(cls, space, dims: Sequence[int]) -> "GridSpec":
        """Grid covering a ``CSpace`` box with cell centres inset by half a cell."""
        lo, hi = np.asarray(space.lower, float), np.asarray(space.upper, float)
        dims = tuple(int(d) for d in dims)
        spacing = (hi - lo) / np.asarray(dims)
        origin = lo + spacing / 2
        return cls(dims, tuple(spacing), tuple(origin), tuple(bool(p) for p in space.periodic),
                   tuple(np.asarray(space.weights, float)))

    def centers(self) -> np.ndarray:
        axes = [self.origin[k] + np.arange(self.dims[k]) * self.spacing[k] for k in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def to_index(self, c) -> tuple[int, ...]:
        u = (np.asarray(c, float) - np.asarray(self.origin)) / np.asarray(self.spacing)
        idx = []
        for k, v in enumerate(np.rint(u).astype(int)):
            n = self.dims[k]
            idx.append(int(v % n) if self.periodic[k] else int(np.clip(v, 0, n - 1)))
        return tuple(idx)

    def to_coord(self, idx) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(idx, float) * np.asarray(self.spacing)


@dataclass(eq=False)
class TimeGrid:
    spec: GridSpec
    values: np.ndarray
    source: tuple[int, ...]
    speed: np.ndarray
    accept_order: list[float] = field(default_factory=list, repr=False)

    @property
    def source_coord(self) -> np.ndarray:
        return self.spec.to_coord(self.source)

    def _filled(self) -> np.ndarray:
        finite = np.isfinite(self.values)
        if not hasattr(self, "_fill_cache"):
            top = float(self.values[finite].max()) if finite.any() else 0.0
            big = 2.0 * top + 1.0
            self._fill_cache = np.where(finite, self.values, big)
        return self._fill_cache

    def _cell(self, c):
        spec = self.spec
        u = (np.asarray(c, float) - np.asarray(spec.origin)) / np.asarray(spec.spacing)
        i0, frac = [], []
        for k in range(spec.ndim):
            n = spec.dims[k]
            if spec.periodic[k]:
                b = math.floor(u[k])
                i0.append((b % n, (b + 1) % n))
                frac.append(u[k] - b)
            else:
                uk = min(max(u[k], 0.0), n - 1.0)
                b = min(int(math.floor(uk)), n - 2)
                i0.append((b, b + 1))
                frac.append(uk - b)
        return i0, np.asarray(frac)

    def interpolate(self, c, fill_blocked: bool = True) -> float:
        """Multilinear interpolation; blocked cells read as a large finite time."""
        v = self._filled() if fill_blocked else self.values
        i0, f = self._cell(c)
        total = 0.0
        for corner in itertools.product((0, 1), repeat=self.spec.ndim):
            wgt = 1.0
            for k, bit in enumerate(corner):
                wgt *= f[k] if bit else 1.0 - f[k]
            if wgt:
                total += wgt * v[tuple(i0[k][bit] for k, bit in enumerate(corner))]
        return float(total)

    def gradient(self, c) -> np.ndarray:
        """Gradient of the multilinear interpolant within the containing cell."""
        v = self._filled()
        i0, f = self._cell(c)
        nd = self.spec.ndim
        g = np.zeros(nd)
        for corner in itertools.product((0, 1), repeat=nd):
            val = v[tuple(i0[k][bit] for k, bit in enumerate(corner))]
            for j in range(nd):
                wgt = 1.0 if corner[j] else -1.0
                for k, bit in enumerate(corner):
                    if k != j:
                        wgt *= f[k] if bit else 1.0 - f[k]
                g[j] += wgt * val
        return g / np.asarray(self.spec.spacing)


def _solve_update(known: list[tuple[float, float]], inv_speed: float) -> float:
    """Upwind quadratic ``sum(((T - a_k)/h_k)^2) = inv_speed^2`` over sorted neighbours."""
    known.sort()
    a0, h0 = known[0]
    T = a0 + h0 * inv_speed
    sa = sb = sc = 0.0
    for a, h in known:
        if T <= a:
            break
        w = 1.0 / (h * h)
        sa += w
        sb += a * w
        sc += a * a * w
        disc = sb * sb - sa * (sc - inv_speed * inv_speed)
        if disc < 0:
            break
        T = (sb + math.sqrt(disc)) / sa
    return T


def fmm_solve(spec: GridSpec, speed, source, record_order: bool = False,
              init_radius: float = 4.0) -> TimeGrid:
    """Arrival times from ``source`` (snapped to its cell) under ``speed``.

    ``speed`` is an array over cells or a callable evaluated on cell centres.

    Cells slower than ``BLOCKED_SPEED`` are impassable and stay at ``+inf``. Cells
    within ``init_radius`` cells of the source are seeded with straight-line time at
    the source speed (the point-source singularity otherwise dominates the error).
    """
    if callable(speed):
        speed = np.asarray(speed(spec.centers()), float)
    speed = np.broadcast_to(np.asarray(speed, float), spec.dims)
    src = spec.to_index(source)
    if speed[src] < BLOCKED_SPEED:
        raise FmmError("source lies in a blocked cell")

    dims = spec.dims
    nd = len(dims)
    h = spec.metric_spacing
    T = np.full(dims, np.inf)
    state = np.zeros(dims, dtype=np.int8)
    blocked = speed < BLOCKED_SPEED
    inv = np.where(blocked, np.inf, 1.0 / np.maximum(speed, BLOCKED_SPEED))
    heap = [(0.0, src)]
    T[src] = 0.0
    state[src] = NARROW
    for idx, t0 in _seed_ball(spec, src, init_radius, blocked, inv[src]):
        T[idx] = t0
        state[idx] = NARROW
        heap.append((t0, idx))
    heapq.heapify(heap)
    order: list[float] = []

    def neighbours(idx):
        for k in range(nd):
            for step in (-1, 1):
                j = idx[k] + step
                if spec.periodic[k]:
                    j %= dims[k]
                elif j < 0 or j >= dims[k]:
                    continue
                yield idx[:k] + (j,) + idx[k + 1:]

    while heap:
        t, idx = heapq.heappop(heap)
        if state[idx] == ACCEPTED or t > T[idx]:
            continue
        state[idx] = ACCEPTED
        if record_order:
            order.append(t)
        for nb in neighbours(idx):
            if state[nb] == ACCEPTED or blocked[nb]:
                continue
            known = []
            for k in range(nd):
                best = math.inf
                for step in (-1, 1):
                    j = nb[k] + step
                    if spec.periodic[k]:
                        j %= dims[k]
                    elif j < 0 or j >= dims[k]:
                        continue
                    m = nb[:k] + (j,) + nb[k + 1:]
                    if state[m] == ACCEPTED and T[m] < best:
                        best = T[m]
                if best < math.inf:
                    known.append((best, h[k]))
            t_new = _solve_update(known, inv[nb])
            if t_new < T[nb]:
                T[nb] = t_new
                state[nb] = NARROW
                heapq.heappush(heap, (t_new, nb))
    return TimeGrid(spec, T, src, np.asarray(speed), order)


def _seed_ball(spec: GridSpec, src, radius: float, blocked: np.ndarray, inv_speed: float):
    if radius <= 0:
        return []
    h = spec.metric_spacing
    reach = radius * float(h.max())
    offs = [range(-int(math.ceil(reach / hk)), int(math.ceil(reach / hk)) + 1) for hk in h]
    seeds = []
    for off in itertools.product(*offs):
        if not any(off):
            continue
        d = math.sqrt(sum((o * hk) ** 2 for o, hk in zip(off, h)))
        if d > reach:
            continue
        idx = []
        for k, o in enumerate(off):
            j = src[k] + o
            if spec.periodic[k]:
                j %= spec.dims[k]
            elif j < 0 or j >= spec.dims[k]:
                break
            idx.append(j)
        else:
            idx = tuple(idx)
            if blocked[idx]:
                return []  # obstacle nearby: straight-line seeding is unsafe
            seeds.append((idx, d * inv_speed))
    return seeds


def backtrack_path(tg: TimeGrid, goal, step: float | None = None) -> list[np.ndarray]:
    """Steepest descent on interpolated time from ``goal`` to the source (goal first).

    ``step`` is a metric length; it defaults to half the smallest metric spacing.
    """
    spec = tg.spec
    gidx = spec.to_index(goal)
    if not np.isfinite(tg.values[gidx]):
        raise FmmError("goal is unreachable from the source")
    h = spec.metric_spacing
    step = float(h.min()) / 2 if step is None else float(step)
    w = spec.w
    src = tg.source_coord
    periodic = np.asarray(spec.periodic)

    def metric_gap(a, b):
        d = np.asarray(b) - np.asarray(a)
        d[periodic] = (d[periodic] + np.pi) % (2 * np.pi) - np.pi
        return float(np.linalg.norm(d * w))

    x = np.asarray(goal, float).copy()
    path = [x.copy()]
    reach = max(step, 1.5 * float(h.max()))
    t_cur = tg.interpolate(x)
    for _ in range(10 * sum(spec.dims)):
        if metric_gap(x, src) <= reach:
            if metric_gap(x, src) > 0:
                path.append(src.copy())
            return path
        g = tg.gradient(x)
        direction = -g / (w * w)
        norm = float(np.linalg.norm(direction * w))
        if norm == 0:
            raise DescentStall(f"flat time field at {x}")
        direction /= norm
        a = step
        while a > step * 1e-3:
            cand = x + a * direction
            cand[periodic] = (cand[periodic] + np.pi) % (2 * np.pi) - np.pi
            t_c = tg.interpolate(cand)
            if t_c < t_cur:
                break
            a /= 2
        else:
            # interpolation near blocked cells can trap the line search; fall back to
            # a discrete upwind step through grid cell centres, which always decreases
            hop = _upwind_hop(tg, x)
            if hop is None:
                raise DescentStall(f"descent stalled at {x} (T={t_cur:.4g})")
            path.extend(c.copy() for c in hop)
            x, t_cur = hop[-1].copy(), tg.interpolate(hop[-1])
            continue
        x, t_cur = cand, t_c
        path.append(x.copy())
    raise DescentStall("backtracking exceeded its step budget")


def _upwind_hop(tg: TimeGrid, x):
    """Centres of the lowest corner of the cell containing ``x`` and of its lowest axis neighbour."""
    spec = tg.spec
    i0, _ = tg._cell(x)
    best = None
    for corner in itertools.product((0, 1), repeat=spec.ndim):
        idx = tuple(i0[k][bit] for k, bit in enumerate(corner))
        if np.isfinite(tg.values[idx]) and (best is None or tg.values[idx] < tg.values[best]):
            best = idx
    if best is None:
        return None
    if best == tg.source:
        return [spec.to_coord(best)]
    nxt = None
    for k in range(spec.ndim):
        for step in (-1, 1):
            j = best[k] + step
            if spec.periodic[k]:
                j %= spec.dims[k]
            elif j < 0 or j >= spec.dims[k]:
                continue
            nb = best[:k] + (j,) + best[k + 1:]
            if tg.values[nb] < tg.values[best] and (nxt is None or tg.values[nb] < tg.values[nxt]):
                nxt = nb
    if nxt is None:
        return None
    return [_unwrap_coord(spec, best), _unwrap_coord(spec, nxt)]


def _unwrap_coord(spec: GridSpec, idx) -> np.ndarray:
    c = spec.to_coord(idx)
    per = np.asarray(spec.periodic)
    c[per] = (c[per] + np.pi) % (2 * np.pi) - np.pi
    return c


def check_monotone(tg: TimeGrid, path: Sequence, tol: float = 1e-6) -> bool:
    """True iff interpolated time never increases along ``path`` (ordered toward the source)."""
    if len(path) == 0:
        raise ValueError("path must be nonempty")
    vals = [tg.interpolate(p) for p in path]
    return all(b <= a + tol for a, b in zip(vals, vals[1:]))


def grid_slack(tg: TimeGrid) -> float:
    """Discretization slack ``2 * max spacing / min speed`` over passable cells."""
    s = tg.speed[tg.speed >= BLOCKED_SPEED]
    return 2.0 * float(tg.spec.metric_spacing.max()) / float(s.min())


def save_time_grid(tg: TimeGrid, path) -> None:
    """Persist arrival times in the shared binary grid format (``+inf`` kept as ``inf``)."""
    from .scene import save_grid

    save_grid(path, tg.values, tg.spec.origin, tg.spec.spacing, kind="time")


def load_time_grid(path, periodic: Sequence[bool] | None = None, weights: Sequence[float] | None = None) -> TimeGrid:
    """Inverse of ``save_time_grid``; periodicity and metric weights are not stored in the
    file and must be supplied for non-Euclidean grids. The source is the zero cell."""
    from .scene import SceneError, load_grid

    values, origin, spacing, kind = load_grid(path)
    if kind != "time":
        raise SceneError(f"{path}: not a time grid")
    nd = values.ndim
    spec = GridSpec(values.shape, tuple(spacing), tuple(origin),
                    tuple(periodic) if periodic is not None else (False,) * nd,
                    tuple(weights) if weights is not None else None)
    src = tuple(int(i) for i in np.unravel_index(int(np.argmin(values)), values.shape))
    return TimeGrid(spec, values, src, np.full(values.shape, np.nan))
