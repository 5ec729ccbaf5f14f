"""Factorized neural travel-time field ``T(s, g) = |s - g| / tau(s, g)``.

``tau`` comes from a symmetric network: a shared c-space encoder embeds both
endpoints, an elementwise ``[max, min]`` combines them, and a generator maps the
result through a sigmoid into ``(0, 1]``. Input gradients are taken with
autograd; the same graph is reused for parameter gradients during training.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .scene import CSpace

log = logging.getLogger(__name__)

SINGULARITY_GUARD = 1e-6


class SingularityError(ValueError):
    pass


class ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.fc1 = nn.Linear(width, width)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x):
        return F.elu(x + self.fc2(F.elu(self.fc1(x))))


class TimeField(nn.Module):
    def __init__(self, space: CSpace, width: int = 128, enc_blocks: int = 2, gen_blocks: int = 2,
                 seed: int = 0, dtype: torch.dtype = torch.float32, n_fourier: int = 0,
                 fourier_scale: float = 1.0):
        super().__init__()
        self.space_tag = space.tag
        self.arch = {"width": width, "enc_blocks": enc_blocks, "gen_blocks": gen_blocks,
                     "n_fourier": n_fourier, "fourier_scale": fourier_scale}
        self.register_buffer("lower", torch.tensor(np.array(space.lower), dtype=dtype))
        self.register_buffer("upper", torch.tensor(np.array(space.upper), dtype=dtype))
        self.register_buffer("periodic", torch.tensor(np.array(space.periodic), dtype=torch.bool))
        self.register_buffer("weights", torch.tensor(np.array(space.weights), dtype=dtype))
        n_raw = space.dim + int(space.periodic.sum())
        n_in = n_raw + 2 * n_fourier
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            # optional random Fourier features of the embedded configuration
            self.register_buffer("freqs", torch.randn(n_raw, n_fourier) * fourier_scale)
            self.inp = nn.Linear(n_in, width)
            self.enc = nn.ModuleList(ResBlock(width) for _ in range(enc_blocks))
            self.mix = nn.Linear(2 * width, width)
            self.gen = nn.ModuleList(ResBlock(width) for _ in range(gen_blocks))
            self.head = nn.Linear(width, 1)
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.inp.weight.dtype

    def space(self) -> CSpace:
        return CSpace(self.space_tag, self.lower.double().numpy(), self.upper.double().numpy(),
                      self.periodic.numpy().copy(), self.weights.double().numpy())

    def embed(self, c: torch.Tensor) -> torch.Tensor:
        # positional axes rescaled to [-1, 1]; periodic axes as (cos, sin)
        mid = (self.lower + self.upper) / 2
        half = (self.upper - self.lower) / 2
        lin = (c - mid) / half
        per = self.periodic
        if bool(per.any()):
            ang = c[..., per]
            lin = torch.cat([lin[..., ~per], torch.cos(ang), torch.sin(ang)], dim=-1)
        if self.freqs.shape[1]:
            z = lin @ self.freqs
            lin = torch.cat([lin, torch.sin(z), torch.cos(z)], dim=-1)
        return lin

    def encode(self, c: torch.Tensor) -> torch.Tensor:
        h = F.elu(self.inp(self.embed(c)))
        for blk in self.enc:
            h = blk(h)
        return h

    def tau(self, s: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        es, eg = self.encode(s), self.encode(g)
        # torch.maximum/minimum split ties evenly; route them to the first argument
        hi = torch.where(es >= eg, es, eg)
        lo = torch.where(es >= eg, eg, es)
        h = F.elu(self.mix(torch.cat([hi, lo], dim=-1)))
        for blk in self.gen:
            h = blk(h)
        return torch.sigmoid(self.head(h)).squeeze(-1)

    def metric_dist(self, s: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        d = g - s
        if bool(self.periodic.any()):
            # wrap on |d| so swapping s and g gives a bitwise identical distance
            r = torch.remainder(d.abs(), 2 * math.pi)
            d = torch.where(self.periodic, torch.minimum(r, 2 * math.pi - r), d)
        return torch.linalg.vector_norm(d * self.weights, dim=-1)

    def forward(self, s: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        """Travel time; exactly zero where ``s == g``."""
        return self.metric_dist(s, g) / self.tau(s, g)

    def time_and_grads(self, s: torch.Tensor, g: torch.Tensor, create_graph: bool = False):
        """``(T, dT/ds, dT/dg)`` for batched endpoints."""
        s = s.detach().requires_grad_(True)
        g = g.detach().requires_grad_(True)
        with torch.enable_grad():
            T = self(s, g)
            gs, gg = torch.autograd.grad(T.sum(), (s, g), create_graph=create_graph)
        return T, gs, gg

    def grad_norm(self, grad: torch.Tensor) -> torch.Tensor:
        """Gradient norm in the metric's dual: ``|grad / weights|``."""
        return torch.linalg.vector_norm(grad / self.weights, dim=-1)

    # numpy conveniences used by planners -----------------------------------------

    def _t(self, x) -> torch.Tensor:
        return torch.as_tensor(np.asarray(x, dtype=float), dtype=self.dtype)

    def times(self, s, g) -> np.ndarray:
        with torch.no_grad():
            return self(self._t(s), self._t(g)).double().numpy()

    def evaluate(self, s, g):
        """Numpy ``(T, grad_s, grad_g, speed_s, speed_g)`` for batched endpoints."""
        T, gs, gg = self.time_and_grads(self._t(s), self._t(g))
        with torch.no_grad():
            ns, ng = self.grad_norm(gs), self.grad_norm(gg)
        return (T.detach().double().numpy(), gs.double().numpy(), gg.double().numpy(),
                (1.0 / ns).double().numpy(), (1.0 / ng).double().numpy())


@dataclass
class FieldEval:
    tau: float
    time: float
    grad_start: np.ndarray
    grad_goal: np.ndarray
    speed_start: float
    speed_goal: float
    weights: np.ndarray | None = None

    def metric_grad(self, at: str) -> np.ndarray:
        grad = self.grad_start if at == "start" else self.grad_goal
        return grad if self.weights is None else grad / self.weights


def tau_forward(m: TimeField, s, g) -> float:
    with torch.no_grad():
        return float(m.tau(m._t(s)[None], m._t(g)[None])[0])


def time_from_tau(space: CSpace, s, g, tau: float) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    d = float(space.distance(np.asarray(s, float), np.asarray(g, float)))
    return 0.0 if d == 0.0 else d / tau


def grad_time(m: TimeField, s, g) -> FieldEval:
    s_t, g_t = m._t(s)[None], m._t(g)[None]
    if float(m.metric_dist(s_t, g_t)[0]) < SINGULARITY_GUARD:
        raise SingularityError("start and goal closer than the singularity guard")
    T, gs, gg = m.time_and_grads(s_t, g_t)
    with torch.no_grad():
        tau = float(m.tau(s_t, g_t)[0])
    gs_np, gg_np = gs[0].double().numpy(), gg[0].double().numpy()
    w = m.weights.double().numpy()
    return FieldEval(tau, float(T.detach()[0]), gs_np, gg_np,
                     _reciprocal(np.linalg.norm(gs_np / w)), _reciprocal(np.linalg.norm(gg_np / w)), w)


def _reciprocal(norm: float) -> float:
    if norm <= 1e-9:
        log.warning("vanishing time gradient (|grad T| = %g); reporting max speed", norm)
        return float(np.finfo(float).max)
    return 1.0 / norm


def predicted_speed(ev: FieldEval, at: str = "goal") -> float:
    if at not in ("start", "goal"):
        raise ValueError("at must be 'start' or 'goal'")
    return _reciprocal(float(np.linalg.norm(ev.metric_grad(at))))


def eikonal_residual(m: TimeField, s, g, gt_speed: float) -> float:
    """``|S* |grad_g T| - 1|`` at the goal."""
    if gt_speed <= 0:
        raise ValueError("gt_speed must be positive")
    ev = grad_time(m, s, g)
    return abs(gt_speed * float(np.linalg.norm(ev.metric_grad("goal"))) - 1.0)
