"""Learned shape-aware distance function.

A per-point encoder turns each transformed sparse surface point into a distance
feature; one head decodes that feature into the point's environment distance,
another decodes it together with a fixed local-shape descriptor into a per-point
robot clearance, which a softmin pools over the 32 sparse points.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .distance import DistanceOracle
from .scene import JOINT_2LINK, SE2, CSpace, RobotShape

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


def shape_descriptors(sparse: np.ndarray, dense: np.ndarray, k: int = 8) -> np.ndarray:
    """Per sparse point: robot-frame coordinates plus k-NN radius in the dense cloud."""
    d = np.linalg.norm(sparse[:, None] - dense[None], axis=-1)
    radius = np.sort(d, axis=1)[:, min(k, dense.shape[0] - 1)]
    return np.concatenate([sparse, radius[:, None]], axis=1)


def _elu_(x: torch.Tensor) -> torch.Tensor:
    """In-place ELU as ``relu(x) + exp(min(x, 0)) - 1``; several times faster than
    ``F.elu`` on CPU, which goes through ``expm1``."""
    neg = torch.clamp(x, max=0.0)
    torch.exp(neg, out=neg)
    return x.clamp_(min=0.0).add_(neg).sub_(1.0)


def _mlp(n_in: int, width: int, n_out: int, layers: int) -> nn.Sequential:
    mods: list[nn.Module] = []
    d = n_in
    for _ in range(layers - 1):
        mods += [nn.Linear(d, width), nn.ELU()]
        d = width
    mods.append(nn.Linear(d, n_out))
    return nn.Sequential(*mods)


class SadfModel(nn.Module):
    def __init__(self, shape: RobotShape, space: CSpace, width: int = 64, n_fourier: int = 64,
                 fourier_scale: float = 25.0, temperature: float = 0.02, seed: int = 0):
        super().__init__()
        self.space_tag = space.tag
        self.robot_name = shape.name
        self.temperature = temperature
        self.arch = {"width": width, "n_fourier": n_fourier, "fourier_scale": fourier_scale,
                     "temperature": temperature}
        links = shape.links or (None,)
        sparse = [l.sparse_points if l is not None else shape.sparse_points for l in links]
        dense = [l.dense_points if l is not None else shape.dense_points for l in links]
        desc = np.stack([shape_descriptors(s, d) for s, d in zip(sparse, dense)])
        self.register_buffer("sparse", torch.as_tensor(np.stack(sparse), dtype=torch.float32))
        self.register_buffer("shape_desc", torch.as_tensor(desc, dtype=torch.float32))
        self.register_buffer("link_lengths", torch.as_tensor(
            [l.length for l in shape.links] if shape.links else [0.0], dtype=torch.float32))
        self.register_buffer("base", torch.as_tensor(shape.base, dtype=torch.float32))
        n_emb = 2 + 2 * n_fourier
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            # random Fourier features; the scale sets the finest resolvable obstacle detail
            self.register_buffer("freqs", torch.randn(2, n_fourier) * fourier_scale)
            self.point_enc = nn.Sequential(nn.Linear(n_emb, width), nn.ELU(), nn.Linear(width, width), nn.ELU())
            self.dist_dec = _mlp(width, width, 1, 3)
            self.sadf_dec = _mlp(width + desc.shape[-1], width, 1, 3)

    def desc_digest(self) -> str:
        return hashlib.sha256(self.shape_desc.numpy().tobytes()).hexdigest()

    # ---------------------------------------------------------------- geometry

    def world_points(self, cs: torch.Tensor) -> torch.Tensor:
        """(B, L, 32, 2) transformed sparse points for configs (B, d)."""
        pts = self.sparse
        if self.space_tag == JOINT_2LINK:
            out = []
            angle = torch.zeros_like(cs[:, 0])
            origin = self.base.expand(cs.shape[0], 2)
            for i in range(pts.shape[0]):
                angle = angle + cs[:, i]
                c, s = torch.cos(angle), torch.sin(angle)
                p = pts[i]
                x = c[:, None] * p[None, :, 0] - s[:, None] * p[None, :, 1] + origin[:, 0, None]
                y = s[:, None] * p[None, :, 0] + c[:, None] * p[None, :, 1] + origin[:, 1, None]
                out.append(torch.stack([x, y], dim=-1))
                origin = origin + self.link_lengths[i] * torch.stack([c, s], dim=1)
            return torch.stack(out, dim=1)
        p = pts[0]
        if self.space_tag == SE2:
            c, s = torch.cos(cs[:, 2]), torch.sin(cs[:, 2])
            x = c[:, None] * p[None, :, 0] - s[:, None] * p[None, :, 1] + cs[:, 0, None]
            y = s[:, None] * p[None, :, 0] + c[:, None] * p[None, :, 1] + cs[:, 1, None]
            return torch.stack([x, y], dim=-1)[:, None]
        return (p[None] + cs[:, None, :2])[:, None]

    # ---------------------------------------------------------------- heads

    def point_features(self, p: torch.Tensor) -> torch.Tensor:
        ang = p @ self.freqs
        emb = torch.cat([2.0 * p, torch.sin(ang), torch.cos(ang)], dim=-1)
        return self.point_enc(emb)

    def point_distance(self, p: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """``(F_d, distance)`` for world points (..., 2)."""
        fd = self.point_features(p)
        return fd, self.dist_dec(fd).squeeze(-1)

    def per_point(self, cs: torch.Tensor):
        """Per-point decoded clearances (B, L, 32), point distances, and world points."""
        wp = self.world_points(cs)
        fd, pd = self.point_distance(wp)
        desc = self.shape_desc[None].expand(wp.shape[0], -1, -1, -1)
        dec = self.sadf_dec(torch.cat([fd, desc], dim=-1)).squeeze(-1)
        return dec, pd, wp

    def clearance(self, cs: torch.Tensor) -> torch.Tensor:
        """Inference path, numerically equal to ``forward``.

        Skips the point-distance head, splits the first decoder layer as
        ``W [F_d, F_s] = W_d F_d + W_s F_s`` so the shape half is computed once per
        robot, and runs the MLP on flat (N, width) buffers with in-place ELU.
        """
        wp = self.world_points(cs)
        B, L, P, _ = wp.shape
        p = wp.reshape(-1, 2)
        ang = p @ self.freqs
        h = torch.cat([2.0 * p, torch.sin(ang), torch.cos(ang)], dim=1)
        for lin in (self.point_enc[0], self.point_enc[2]):
            h = _elu_(torch.addmm(lin.bias, h, lin.weight.T))
        first = self.sadf_dec[0]
        width = h.shape[1]
        shape_term = self.shape_desc @ first.weight[:, width:].T + first.bias  # (L, P, width)
        h = (h @ first.weight[:, :width].T).view(B, L, P, width).add_(shape_term)
        h = _elu_(h.view(-1, width))
        mid, last = self.sadf_dec[2], self.sadf_dec[4]
        h = _elu_(torch.addmm(mid.bias, h, mid.weight.T))
        dec = torch.addmm(last.bias, h, last.weight.T).view(B, L, P)
        return self.softmin(dec).min(dim=-1).values

    def softmin(self, d: torch.Tensor) -> torch.Tensor:
        w = torch.softmax(-d / self.temperature, dim=-1)
        return (w * d).sum(-1)

    def forward(self, cs: torch.Tensor) -> torch.Tensor:
        dec, _, _ = self.per_point(cs)
        # softmin over each link's points, then the union (hard min) over links
        return self.softmin(dec).min(dim=-1).values

    def distances(self, cs, batch: int = 256) -> np.ndarray:
        cs = np.atleast_2d(np.asarray(cs, dtype=np.float32))
        out = []
        with torch.inference_mode():
            for lo in range(0, len(cs), batch):
                out.append(self.clearance(torch.from_numpy(cs[lo:lo + batch])).numpy())
        return np.concatenate(out).astype(float) if out else np.zeros(0)


def predict_sadf(m: SadfModel, shape: RobotShape, c) -> float:
    if shape.name != m.robot_name:
        raise ValueError(f"model trained for robot {m.robot_name!r}, got {shape.name!r}")
    ref = shape_descriptors(shape.sparse_points, shape.dense_points) if not shape.links else None
    if ref is not None and not np.allclose(ref, m.shape_desc[0].numpy(), atol=1e-5):
        raise ValueError("robot shape does not match the model's shape descriptors")
    return float(m.distances(np.asarray(c, float)[None])[0])


def point_distance_head(m: SadfModel, p) -> tuple[np.ndarray, float]:
    with torch.no_grad():
        fd, d = m.point_distance(torch.as_tensor(np.asarray(p, np.float32))[None])
    return fd[0].numpy(), float(d[0])


def loss_d(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean absolute per-point distance error over all (transform, point) samples."""
    if pred.numel() == 0:
        raise ValueError("empty batch")
    return (pred - gt).abs().mean()


def loss_sadf(pred: torch.Tensor, gt: torch.Tensor, point_pred: torch.Tensor,
              point_gt: torch.Tensor, lambda_d: float = 1.0) -> torch.Tensor:
    if pred.numel() == 0:
        raise ValueError("empty batch")
    return (pred - gt).abs().mean() + lambda_d * loss_d(point_pred, point_gt)


@dataclass
class SadfTrainConfig:
    lambda_d: float = 1.0
    lr: float = 2e-4
    weight_decay: float = 0.1
    epochs: int = 20
    batch_size: int = 256
    seed: int = 0
    n_samples: int = 100_000
    val_fraction: float = 0.1
    width: int = 64
    n_fourier: int = 64
    fourier_scale: float = 25.0
    temperature: float = 0.02


@dataclass
class SadfReport:
    train_loss: list[float] = field(default_factory=list)
    val_median: float = float("nan")
    val_p90: float = float("nan")
    val_max: float = float("nan")
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def train_sadf(cfg: SadfTrainConfig, oracle: DistanceOracle, seed: int | None = None):
    """Fit a ``SadfModel`` to dense-oracle labels; returns ``(model, report)``."""
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    space = oracle.space
    cs = space.sample(rng, cfg.n_samples)
    labels = oracle.with_mode("dense")(cs)
    n_val = max(1, int(cfg.val_fraction * len(cs)))
    tr_c, va_c = cs[n_val:], cs[:n_val]
    tr_y, va_y = labels[n_val:], labels[:n_val]

    model = SadfModel(oracle.shape, space, cfg.width, cfg.n_fourier, cfg.fourier_scale,
                      cfg.temperature, seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    tc = torch.as_tensor(tr_c, dtype=torch.float32)
    ty = torch.as_tensor(tr_y, dtype=torch.float32)
    report = SadfReport()
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(tc))
        total, nb = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            idx = torch.as_tensor(perm[lo:lo + cfg.batch_size])
            c, y = tc[idx], ty[idx]
            dec, pd, wp = model.per_point(c)
            point_gt = torch.as_tensor(oracle.env.query(wp.detach().double().numpy())[0], dtype=torch.float32)
            pred = model.softmin(dec).min(dim=-1).values
            loss = loss_sadf(pred, y, pd, point_gt, cfg.lambda_d)
            if not torch.isfinite(loss):
                raise DivergenceError(f"SADF loss diverged at epoch {epoch} (loss={loss.item()})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            nb += 1
        report.train_loss.append(total / max(nb, 1))
        log.info("sadf epoch %d loss %.5f", epoch, report.train_loss[-1])
    err = np.abs(model.distances(va_c) - va_y)
    report.val_median = float(np.median(err))
    report.val_p90 = float(np.quantile(err, 0.9))
    report.val_max = float(err.max())
    report.wall_time = time.perf_counter() - t0
    model.eval()
    return model, report


@dataclass
class SadfEval:
    n: int
    median: float
    p90: float
    max: float
    confusion: dict
    accuracy: float
    model_time: float
    oracle_time: float

    @property
    def speedup(self) -> float:
        return self.oracle_time / self.model_time if self.model_time > 0 else float("inf")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speedup"] = self.speedup
        return d


def eval_sadf(m, oracle: DistanceOracle, n: int, seed: int = 0, margin: float = 0.0) -> SadfEval:
    """Compare a distance predictor with the dense oracle on ``n`` random configurations.

    ``m`` is a ``SadfModel`` or any callable mapping configs (B, d) to clearances.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cs = oracle.space.sample(rng, n)
    predict = getattr(m, "distances", m)
    predict(cs[:8])  # warm-up outside the timed region
    t0 = time.perf_counter()
    pred = np.asarray(predict(cs), float)
    t1 = time.perf_counter()
    dense = oracle.with_mode("dense")
    gt = dense(cs)
    t2 = time.perf_counter()
    err = np.abs(pred - gt)
    pc, gc = pred <= margin, gt <= margin
    conf = {"tp": int(np.sum(pc & gc)), "fp": int(np.sum(pc & ~gc)),
            "fn": int(np.sum(~pc & gc)), "tn": int(np.sum(~pc & ~gc))}
    return SadfEval(n, float(np.median(err)), float(np.quantile(err, 0.9)), float(err.max()),
                    conf, float(np.mean(pc == gc)), t1 - t0, t2 - t1)
