import json

import numpy as np
import pytest
import torch

from eikoplan.field import SingularityError, TimeField, eikonal_residual
from eikoplan.planner import StraightLineField
from eikoplan.scene import build_env_sdf, cspace_for, disc_robot, load_workspace
from eikoplan.distance import DistanceOracle, clip_speed
from eikoplan.training import (SamplePair, TrainConfig, WaypointBatch, combine, make_waypoints, monotonic_loss,
                               optimal_loss, sample_free, sample_pairs, speed_loss, speed_loss_from_speeds,
                               total_loss, train_field, waypoint_step)
from oracles import speed_loss_by_hand

POINT = cspace_for(disc_robot())


def free(cs):
    return np.ones(len(np.atleast_2d(cs)))


def blocked(cs):
    return np.zeros(len(np.atleast_2d(cs)))


class Scaled(TimeField):
    """``T = k |s - g|`` so the gradient norm is ``k`` everywhere."""

    def __init__(self, space, k):
        super().__init__(space, width=8, enc_blocks=0, gen_blocks=0, dtype=torch.float64)
        self.k = k

    def tau(self, s, g):
        return torch.full(s.shape[:-1], 1.0 / self.k, dtype=s.dtype)


def batch_of(n, speed, seed=0):
    rng = np.random.default_rng(seed)
    a, b = POINT.sample(rng, n), POINT.sample(rng, n)
    return SamplePair(a, b, np.full(n, speed), np.full(n, speed))


def test_speed_loss_hand_example():
    assert speed_loss_from_speeds([1.0], [0.25], [1.0], [0.25]) == pytest.approx(3.0)
    assert speed_loss(Scaled(POINT, 4.0), batch_of(1, 1.0)).item() == pytest.approx(3.0)
    assert speed_loss(Scaled(POINT, 4.0), batch_of(7, 0.25)).item() == pytest.approx(0.0, abs=1e-12)


def test_speed_loss_matches_independent_formula():
    rng = np.random.default_rng(1)
    gi, pi_, gk, pk = (rng.uniform(0.1, 1.0, 16) for _ in range(4))
    assert speed_loss_from_speeds(gi, pi_, gk, pk) == pytest.approx(speed_loss_by_hand(gi, pi_, gk, pk), rel=1e-12)


def test_speed_loss_swap_invariant_and_guard():
    m = TimeField(POINT, width=32, seed=2, dtype=torch.float64)
    b = batch_of(32, 0.5)
    b.gt_speed_i = np.linspace(0.1, 1.0, 32)
    assert speed_loss(m, b).item() == pytest.approx(speed_loss(m, b.swapped()).item(), rel=1e-12)
    b.c_k[3] = b.c_i[3]
    with pytest.raises(SingularityError):
        speed_loss(m, b)


@pytest.mark.parametrize("args,expected", [((1.0, 0.4, 0.5), 0.0), ((1.0, 1.2, 0.5), 0.2), ((1.0, 1.1, 1.3), 0.4)])
def test_monotonic_examples(args, expected):
    assert monotonic_loss(*args).item() == pytest.approx(expected)


@pytest.mark.parametrize("args,expected", [((1.0, 0.4, 0.5), 0.1), ((0.8, 0.4, 0.5), 0.0), ((0.9, 0.9, 0.0), 0.0)])
def test_optimal_examples(args, expected):
    assert optimal_loss(*args).item() == pytest.approx(expected)


def test_combine_schedule():
    cfg = TrainConfig()
    assert combine(0.5, 1.0, 2.0, cfg, 60) == pytest.approx(0.582)
    assert combine(0.5, 1.0, 2.0, cfg, 49) == 0.5
    with pytest.raises(ValueError):
        TrainConfig(lambda_m=-1)
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="step")


def test_total_loss_reduces_to_speed_loss():
    m = TimeField(POINT, width=32, seed=4, dtype=torch.float64)
    b = batch_of(16, 0.7)
    rng = np.random.default_rng(3)
    wb = WaypointBatch(POINT.sample(rng, 8), POINT.sample(rng, 8), POINT.sample(rng, 8), np.ones(8))
    L = speed_loss(m, b).item()
    off = TrainConfig(lambda_m=0, lambda_o=0, constraint_start_epoch=0)
    assert total_loss(m, b, wb, off, 10)[0].item() == pytest.approx(L, rel=1e-12)
    assert total_loss(m, b, wb, TrainConfig(), 10)[0].item() == pytest.approx(L, rel=1e-12)
    on = total_loss(m, b, wb, TrainConfig(), 50)
    assert on[0].item() == pytest.approx(L + 0.08 * on[2].item() + 0.001 * on[3].item(), rel=1e-12)
    on[0].backward()
    assert all(p.grad is not None for p in m.parameters())


def test_waypoint_step_cases():
    f = StraightLineField(POINT)
    w = waypoint_step(f, [0.0, 0.0], [0.3, 0.0], free, alpha=0.03)
    assert np.allclose(w, [0.03, 0.0])
    assert waypoint_step(f, [0.0, 0.0], [0.3, 0.0], blocked, alpha=0.03) is None
    w = waypoint_step(f, [0.0, 0.0], [0.01, 0.0], free, alpha=0.03)
    assert np.array_equal(w, [0.01, 0.0])


def test_sample_pairs_deterministic_and_labelled():
    w = load_workspace("cluttered")
    o = DistanceOracle(build_env_sdf(w, 64), disc_robot(), space=POINT)
    cfg = TrainConfig(seed=7)
    a = sample_pairs(cfg, o, 500, POINT)
    b = sample_pairs(cfg, o, 500, POINT)
    assert np.array_equal(a.c_i, b.c_i) and np.array_equal(a.gt_speed_k, b.gt_speed_k)
    assert np.all((a.gt_speed_i >= 0.1 - 1e-12) & (a.gt_speed_i <= 1.0))
    assert np.allclose(a.gt_speed_i, clip_speed(o(a.c_i), cfg.speed))


def test_make_waypoints_drops_colliding():
    f = StraightLineField(POINT)
    rng = np.random.default_rng(0)
    pool = sample_free(POINT, free, 100, rng)
    wb = make_waypoints(f, pool, 20, blocked, TrainConfig(), rng)
    assert len(wb) == 0 and wb.dropped == 20
    wb = make_waypoints(f, pool, 20, free, TrainConfig(), rng)
    assert len(wb) == 20 and wb.dropped == 0
    with pytest.raises(RuntimeError):
        sample_free(POINT, blocked, 5, rng, max_draws=1000)


def tiny_cfg(**kw):
    base = dict(pairs_total=256, batch_size=128, epochs=3, constraint_start_epoch=1, width=32,
                constraint_batch=32, deterministic=True, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_train_deterministic(tmp_path):
    w = load_workspace("cluttered")
    o = DistanceOracle(build_env_sdf(w, 64), disc_robot(), space=POINT)
    _, r1 = train_field(tiny_cfg(), POINT, o, report_path=tmp_path / "a.ndjson")
    _, r2 = train_field(tiny_cfg(), POINT, o)
    keys = ("L_s", "L_m", "L_o", "total")
    assert [[r[k] for k in keys] for r in r1.records] == [[r[k] for k in keys] for r in r2.records]
    lines = (tmp_path / "a.ndjson").read_text().splitlines()
    assert len(lines) == 3 and json.loads(lines[2])["epoch"] == 2
    assert r1.records[0]["L_m"] == 0.0


def test_cosine_schedule_runs_and_differs():
    w = load_workspace("cluttered")
    o = DistanceOracle(build_env_sdf(w, 64), disc_robot(), space=POINT)
    _, const = train_field(tiny_cfg(), POINT, o)
    _, cos = train_field(tiny_cfg(lr_schedule="cosine"), POINT, o)
    assert np.isfinite(cos.records[-1]["total"])
    assert cos.records[-1]["L_s"] != const.records[-1]["L_s"]


def test_empty_scene_eikonal_residual():
    w = load_workspace("empty")
    o = DistanceOracle(build_env_sdf(w, 128), disc_robot(), space=POINT)
    cfg = TrainConfig(pairs_total=20_000, epochs=30, lr=1e-3, lambda_m=0, lambda_o=0, seed=0)
    m, _ = train_field(cfg, POINT, o)
    rng = np.random.default_rng(1)
    S, G = POINT.sample(rng, 1000), POINT.sample(rng, 1000)
    sp = clip_speed(o(G), cfg.speed)
    res = [eikonal_residual(m, s, g, v) for s, g, v in zip(S, G, sp)]
    assert np.mean(res) <= 0.1
