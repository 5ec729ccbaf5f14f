import logging
import math

import numpy as np
import pytest
import torch

from eikoplan.field import (FieldEval, SingularityError, TimeField, eikonal_residual, grad_time,
                            predicted_speed, tau_forward, time_from_tau)
from eikoplan.scene import cspace_for, disc_robot, triangle_robot, two_link_arm
from oracles import fd_gradient_check


@pytest.fixture(scope="module")
def se2_field():
    sp = cspace_for(triangle_robot())
    return sp, TimeField(sp, seed=3, dtype=torch.float64)


def test_tau_symmetric_and_bounded(se2_field):
    sp, m = se2_field
    rng = np.random.default_rng(0)
    s, g = sp.sample(rng, 1), sp.sample(rng, 1)
    t1, t2 = tau_forward(m, s[0], g[0]), tau_forward(m, g[0], s[0])
    assert t1 == t2
    assert 0 < t1 <= 1
    again = TimeField(sp, seed=3, dtype=torch.float64)
    assert tau_forward(again, s[0], g[0]) == t1


def test_time_from_tau_examples():
    sp = cspace_for(disc_robot())
    a = np.array([0.1, 0.2])
    assert time_from_tau(sp, a, a, 0.7) == 0.0
    assert time_from_tau(sp, [0.0, 0.0], [0.5, 0.0], 0.5) == pytest.approx(1.0)
    assert time_from_tau(sp, [0.0, 0.0], [0.3, 0.4], 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        time_from_tau(sp, a, a, 0.0)


def test_grad_symmetry_and_guard(se2_field):
    sp, m = se2_field
    s, g = np.array([0.1, -0.2, 0.4]), np.array([-0.3, 0.25, -2.0])
    a, b = grad_time(m, s, g), grad_time(m, g, s)
    assert np.allclose(a.grad_goal, b.grad_start, atol=1e-9)
    assert a.speed_goal == pytest.approx(1 / np.linalg.norm(a.grad_goal / sp.weights))
    with pytest.raises(SingularityError):
        grad_time(m, s, s + 1e-8)


@pytest.mark.parametrize("robot", [triangle_robot(), disc_robot(), two_link_arm()], ids=["se2", "point", "arm"])
def test_gradients_match_finite_differences(robot):
    sp = cspace_for(robot)
    m = TimeField(sp, seed=1, dtype=torch.float64)
    rng = np.random.default_rng(5)
    worst, n, _ = fd_gradient_check(m, sp.sample(rng, 100), sp.sample(rng, 100))
    assert worst <= 1e-3


def test_predicted_speed_examples(caplog):
    ev = FieldEval(0.5, 1.0, np.array([0.0, 2.0]), np.array([2.0, 0.0]), 0.5, 0.5)
    assert predicted_speed(ev, "goal") == pytest.approx(0.5)
    ev = FieldEval(0.5, 1.0, np.array([0.6, 0.8]), np.array([0.0, 1.0]), 1.0, 1.0)
    assert predicted_speed(ev, "start") == pytest.approx(1.0)
    ev = FieldEval(0.5, 1.0, np.zeros(2), np.zeros(2), 0.0, 0.0)
    with caplog.at_level(logging.WARNING):
        assert predicted_speed(ev, "goal") == np.finfo(float).max
    assert "vanishing" in caplog.text
    with pytest.raises(ValueError):
        predicted_speed(ev, "middle")


class _Fixed(TimeField):
    """Field with a prescribed constant gradient norm at the goal: T = k |s - g|."""

    def __init__(self, space, k):
        super().__init__(space, width=8, enc_blocks=0, gen_blocks=0, dtype=torch.float64)
        self.k = k

    def tau(self, s, g):
        return torch.full(s.shape[:-1], 1.0 / self.k, dtype=s.dtype)


def test_eikonal_residual_examples():
    sp = cspace_for(disc_robot())
    s, g = [0.0, 0.0], [0.3, 0.1]
    assert eikonal_residual(_Fixed(sp, 2.0), s, g, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert eikonal_residual(_Fixed(sp, 2.0), s, g, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert eikonal_residual(_Fixed(sp, 1.0), s, g, 1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        eikonal_residual(_Fixed(sp, 1.0), s, g, 0.0)


def test_field_identities(se2_field):
    sp, m = se2_field
    rng = np.random.default_rng(11)
    a, b = sp.sample(rng, 2000), sp.sample(rng, 2000)
    assert np.all(m.times(a, a) == 0)
    assert np.array_equal(m.times(a, b), m.times(b, a))
    with torch.no_grad():
        tau = m.tau(m._t(a), m._t(b)).numpy()
    assert np.all((tau > 0) & (tau <= 1))
    assert np.all(m.times(a, b) >= sp.distance(a, b) - 1e-12)
