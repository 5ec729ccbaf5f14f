"""Self-supervised time-field training: speed loss plus monotonic/optimal constraints.

Speed pairs are sampled over the whole c-space and labelled once with the clip
speed model. After ``constraint_start_epoch`` each step also draws free-space
pairs, rolls the current field forward from ``s`` toward ``g`` to get a waypoint
``w``, and penalizes violations of the monotonic and triangle constraints on
``(T(s,g), T(s,w), T(w,g))``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_model
from .distance import DistanceOracle, SpeedModelParams, clip_speed
from .field import SINGULARITY_GUARD, SingularityError, TimeField
from .planner import descent_step, distance_fn
from .sadf import DivergenceError
from .scene import CSpace

log = logging.getLogger(__name__)

RESAMPLE_ATTEMPTS = 8


@dataclass
class TrainConfig:
    lambda_m: float = 0.08
    lambda_o: float = 0.001
    lr: float = 2e-4
    lr_schedule: str = "constant"
    weight_decay: float = 0.1
    batch_size: int = 1024
    epochs: int = 150
    constraint_start_epoch: int = 50
    pairs_total: int = 100_000
    constraint_batch: int = 256
    waypoint_steps: int = 1
    alpha: float = 0.03
    seed: int = 0
    collision_margin: float = 0.0
    width: int = 128
    enc_blocks: int = 2
    gen_blocks: int = 2
    n_fourier: int = 0
    fourier_scale: float = 1.0
    checkpoint_every: int = 0
    deterministic: bool = False
    speed: SpeedModelParams = field(default_factory=SpeedModelParams)

    def __post_init__(self):
        if self.lambda_m < 0 or self.lambda_o < 0:
            raise ValueError("lambda_m and lambda_o must be non-negative")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if self.constraint_start_epoch < 0:
            raise ValueError("constraint_start_epoch must be >= 0")
        if self.batch_size < 1 or self.pairs_total < 1 or self.epochs < 0:
            raise ValueError("batch_size and pairs_total must be >= 1, epochs >= 0")
        if isinstance(self.speed, dict):
            self.speed = SpeedModelParams(**self.speed)

    @property
    def constrained(self) -> bool:
        return self.lambda_m > 0 or self.lambda_o > 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SamplePair:
    """A batch of configuration pairs with ground-truth speeds at both ends."""

    c_i: np.ndarray
    c_k: np.ndarray
    gt_speed_i: np.ndarray
    gt_speed_k: np.ndarray

    def __len__(self) -> int:
        return len(self.c_i)

    def subset(self, idx) -> "SamplePair":
        return SamplePair(self.c_i[idx], self.c_k[idx], self.gt_speed_i[idx], self.gt_speed_k[idx])

    def swapped(self) -> "SamplePair":
        return SamplePair(self.c_k, self.c_i, self.gt_speed_k, self.gt_speed_i)


@dataclass
class WaypointBatch:
    s: np.ndarray
    w: np.ndarray
    g: np.ndarray
    steps: np.ndarray  # planner steps taken from s to reach w
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.s)


def sample_pairs(cfg: TrainConfig, source, n: int, space: CSpace,
                 rng: np.random.Generator | None = None) -> SamplePair:
    """``n`` uniform pairs over the full c-space, labelled with clip speeds."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    dist = distance_fn(source)
    ci = space.sample(rng, n)
    ck = space.sample(rng, n)
    close = space.distance(ci, ck) < SINGULARITY_GUARD
    while np.any(close):
        ck[close] = space.sample(rng, int(close.sum()))
        close = space.distance(ci, ck) < SINGULARITY_GUARD
    d = np.asarray(dist(np.concatenate([ci, ck])), float)
    sp = clip_speed(d, cfg.speed)
    return SamplePair(ci, ck, sp[:n], sp[n:])


# ------------------------------------------------------------------ losses


def speed_terms(gt_speed, grad_norm):
    """Per-endpoint ``|1 - sqrt(S* |grad T|)| + |1 - 1/sqrt(S* |grad T|)|``.

    With ``S_pred = 1/|grad T|`` this is the symmetric square-root ratio penalty
    between the labelled and predicted speeds; zero iff they agree.
    """
    r = torch.clamp(torch.as_tensor(gt_speed) * grad_norm, min=1e-12)
    q = torch.sqrt(r)
    return torch.abs(1 - q) + torch.abs(1 - 1 / q)


def speed_loss_from_speeds(gt_i, pred_i, gt_k, pred_k):
    """Speed loss from explicit predicted speeds (numpy or torch), averaged over pairs."""
    gi, pi_, gk, pk = (torch.as_tensor(np.asarray(x, float)) if not torch.is_tensor(x) else x
                       for x in (gt_i, pred_i, gt_k, pred_k))
    return float((speed_terms(gi, 1 / pi_) + speed_terms(gk, 1 / pk)).sum() / len(gi))


def speed_loss(m: TimeField, batch: SamplePair, create_graph: bool = True) -> torch.Tensor:
    s, g = m._t(batch.c_i), m._t(batch.c_k)
    if bool((m.metric_dist(s, g) < SINGULARITY_GUARD).any()):
        raise SingularityError("speed batch contains a pair closer than the singularity guard")
    _, gs, gg = m.time_and_grads(s, g, create_graph=create_graph)
    gi = torch.as_tensor(batch.gt_speed_i, dtype=m.dtype)
    gk = torch.as_tensor(batch.gt_speed_k, dtype=m.dtype)
    per_pair = speed_terms(gi, m.grad_norm(gs)) + speed_terms(gk, m.grad_norm(gg))
    return per_pair.sum() / len(batch)


def _as_tensor(x):
    return x if torch.is_tensor(x) else torch.as_tensor(np.asarray(x, float))


def monotonic_loss(T_sg, T_sw, T_wg):
    """Hinge on ``T(s,w) <= T(s,g)`` and ``T(w,g) <= T(s,g)``, summed over the batch."""
    T_sg, T_sw, T_wg = map(_as_tensor, (T_sg, T_sw, T_wg))
    return torch.relu(T_sw - T_sg).sum() + torch.relu(T_wg - T_sg).sum()


def optimal_loss(T_sg, T_sw, T_wg):
    """Hinge on the triangle bound ``T(s,g) <= T(s,w) + T(w,g)``."""
    T_sg, T_sw, T_wg = map(_as_tensor, (T_sg, T_sw, T_wg))
    return torch.relu(T_sg - (T_sw + T_wg)).sum()


def constraint_losses(m: TimeField, wb: WaypointBatch):
    s, w, g = m._t(wb.s), m._t(wb.w), m._t(wb.g)
    T_sg, T_sw, T_wg = m(s, g), m(s, w), m(w, g)
    return monotonic_loss(T_sg, T_sw, T_wg), optimal_loss(T_sg, T_sw, T_wg)


def combine(L_s, L_m, L_o, cfg: TrainConfig, epoch: int):
    """``L_s + lambda_m L_m + lambda_o L_o``; constraint terms are off before the start epoch."""
    if epoch < cfg.constraint_start_epoch:
        return L_s
    return L_s + cfg.lambda_m * L_m + cfg.lambda_o * L_o


def total_loss(m: TimeField, speed_batch: SamplePair, waypoints: WaypointBatch | None,
               cfg: TrainConfig, epoch: int):
    """Returns ``(total, L_s, L_m, L_o)`` as tensors; call ``total.backward()`` for gradients."""
    L_s = speed_loss(m, speed_batch)
    zero = torch.zeros((), dtype=m.dtype)
    L_m = L_o = zero
    if waypoints is not None and len(waypoints) and epoch >= cfg.constraint_start_epoch and cfg.constrained:
        L_m, L_o = constraint_losses(m, waypoints)
    total = combine(L_s, L_m, L_o, cfg, epoch)
    if not torch.isfinite(total):
        raise DivergenceError(f"non-finite loss at epoch {epoch}: L_s={float(L_s)}, "
                              f"L_m={float(L_m)}, L_o={float(L_o)}")
    return total, L_s, L_m, L_o


# ------------------------------------------------------------------ waypoints


def waypoint_step(m, s, g, source, alpha: float, margin: float = 0.0):
    """One planner step from ``s`` toward ``g``; ``None`` signals a collision (resample).

    If the step would reach ``g`` the waypoint is clamped to ``g``.
    """
    w, ok = _advance(m, np.atleast_2d(np.asarray(s, float)), np.atleast_2d(np.asarray(g, float)),
                     distance_fn(source), alpha, margin, 1)
    return w[0] if ok[0] else None


def _advance(m, s, g, dist, alpha, margin, steps):
    space = m.space()
    w = s.copy()
    ok = np.ones(len(s), bool)
    for _ in range(steps):
        gap = space.distance(w, g)
        moving = gap > SINGULARITY_GUARD
        if not np.any(moving):
            break
        _, gs, _, Ss, _ = m.evaluate(w[moving], g[moving])
        step_len = alpha * Ss ** 2 * np.linalg.norm(gs / space.weights, axis=-1)
        nxt = descent_step(space, w[moving], gs, Ss, alpha)
        arrive = step_len >= gap[moving]
        nxt[arrive] = g[moving][arrive]
        w[moving] = nxt
        ok &= np.asarray(dist(w), float) > margin
    return w, ok


def sample_free(space: CSpace, source, n: int, rng: np.random.Generator, margin: float = 0.0,
                max_draws: int = 1_000_000) -> np.ndarray:
    dist = distance_fn(source)
    out, drawn = [], 0
    need = n
    while need > 0:
        if drawn >= max_draws:
            raise RuntimeError(f"free-space sampling exhausted after {drawn} draws")
        k = min(max(2 * need, 256), max_draws - drawn)
        c = space.sample(rng, k)
        drawn += k
        c = c[np.asarray(dist(c), float) > margin]
        out.append(c[:need])
        need -= len(out[-1])
    return np.concatenate(out)


def make_waypoints(m, pool: np.ndarray, n: int, source, cfg: TrainConfig, rng: np.random.Generator,
                   exact=None) -> WaypointBatch:
    """Free ``(s, w, g)`` triples; pairs whose waypoint collides are redrawn up to
    ``RESAMPLE_ATTEMPTS`` times, then dropped. Survivors are re-checked with ``exact``."""
    dist = distance_fn(source)
    space = m.space()
    S = np.empty((0, space.dim))
    W, G = S.copy(), S.copy()
    need, dropped = n, 0
    for _ in range(RESAMPLE_ATTEMPTS):
        if need == 0:
            break
        i = rng.integers(len(pool), size=(need, 2))
        s, g = pool[i[:, 0]], pool[i[:, 1]]
        w, ok = _advance(m, s, g, dist, cfg.alpha, cfg.collision_margin, cfg.waypoint_steps)
        S, W, G = np.concatenate([S, s[ok]]), np.concatenate([W, w[ok]]), np.concatenate([G, g[ok]])
        need -= int(ok.sum())
    dropped += need
    if exact is not None and len(W):
        keep = np.asarray(distance_fn(exact)(W), float) > cfg.collision_margin
        dropped += int((~keep).sum())
        S, W, G = S[keep], W[keep], G[keep]
    return WaypointBatch(S, W, G, np.full(len(S), cfg.waypoint_steps), dropped)


# ------------------------------------------------------------------ loop


@dataclass
class TrainReport:
    records: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    def write_ndjson(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


def set_deterministic(on: bool = True) -> None:
    torch.use_deterministic_algorithms(on)
    if on:
        torch.set_num_threads(1)


def train_field(cfg: TrainConfig, space: CSpace, source, exact=None, report_path: str | Path | None = None,
                checkpoint_dir: str | Path | None = None, meta: dict | None = None):
    """Train a ``TimeField``; returns ``(model, TrainReport)``.

    ``source`` labels speeds and screens waypoints (an oracle or a learned SADF);
    ``exact`` re-checks waypoints and defaults to ``source`` when it is an oracle.
    """
    if cfg.deterministic:
        set_deterministic(True)
    t0 = time.perf_counter()
    if exact is None and isinstance(source, DistanceOracle):
        exact = source
    rng = np.random.default_rng(cfg.seed)
    pairs = sample_pairs(cfg, source, cfg.pairs_total, space, rng)
    model = TimeField(space, cfg.width, cfg.enc_blocks, cfg.gen_blocks, seed=cfg.seed,
                      n_fourier=cfg.n_fourier, fourier_scale=cfg.fourier_scale)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    pool = None
    report = TrainReport()
    fh = open(report_path, "w") if report_path else None
    steps = math.ceil(len(pairs) / cfg.batch_size)
    sched = None
    if cfg.lr_schedule == "cosine":
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.epochs * steps)
    try:
        for epoch in range(cfg.epochs):
            use_c = cfg.constrained and epoch >= cfg.constraint_start_epoch
            if use_c and pool is None:
                pool = sample_free(space, source, max(20 * cfg.constraint_batch, 5000), rng, cfg.collision_margin)
            perm = rng.permutation(len(pairs))
            acc = np.zeros(4)
            dropped = 0
            for k in range(steps):
                batch = pairs.subset(perm[k * cfg.batch_size:(k + 1) * cfg.batch_size])
                wb = None
                if use_c:
                    wb = make_waypoints(model, pool, cfg.constraint_batch, source, cfg, rng, exact)
                    dropped += wb.dropped
                total, L_s, L_m, L_o = total_loss(model, batch, wb, cfg, epoch)
                opt.zero_grad()
                total.backward()
                opt.step()
                if sched is not None:
                    sched.step()
                acc += [float(x.detach()) for x in (total, L_s, L_m, L_o)]
            acc /= steps
            rec = {"epoch": epoch, "L_s": float(acc[1]), "L_m": float(acc[2]), "L_o": float(acc[3]), "total": float(acc[0]),
                   "dropped_pairs": dropped, "wall_time": time.perf_counter() - t0}
            report.records.append(rec)
            if fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                fh.flush()
            log.info("epoch %d total %.5f L_s %.5f L_m %.5f L_o %.5f", epoch, acc[0], acc[1], acc[2], acc[3])
            if checkpoint_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
                save_model(model, Path(checkpoint_dir) / f"field_epoch{epoch + 1:04d}.ckpt", space,
                           {**(meta or {}), "epoch": epoch + 1, "config": cfg.to_dict()})
    finally:
        if fh:
            fh.close()
    report.wall_time = time.perf_counter() - t0
    model.eval()
    return model, report
