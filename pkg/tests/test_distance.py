import math

import numpy as np
import pytest

from eikoplan.distance import (
    DistanceOracle, ManifoldSpeedParams, SpeedModelParams, articulated_sadf, batch_oracle, clip_speed,
    collision_check, link_points, manifold_speed, oracle_sadf)
from eikoplan.scene import (Circle, Workspace, build_env_sdf, cspace_for, load_workspace, point_robot,
                            triangle_robot, two_link_arm)


@pytest.fixture(scope="module")
def cluttered():
    w = load_workspace("cluttered")
    return w, build_env_sdf(w, 128)


def test_clip_speed_examples():
    p = SpeedModelParams()
    assert clip_speed(0.1, p) == pytest.approx(0.5, abs=1e-12)
    assert clip_speed(0.5, p) == pytest.approx(1.0, abs=1e-12)
    assert clip_speed(-0.3, p) == pytest.approx(0.1, abs=1e-12)
    assert p.s_min == pytest.approx(0.1)
    with pytest.raises(ValueError):
        SpeedModelParams(d_min=0.3, d_max=0.2)


def test_manifold_speed_examples():
    p = ManifoldSpeedParams(d_max=0.2, beta=1.0)
    assert manifold_speed(0.0, p) == 1.0
    assert manifold_speed(0.2, p) == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert manifold_speed(5.0, p) == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert manifold_speed(0.1, ManifoldSpeedParams(0.2, 0.5)) == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_point_robot_matches_env(cluttered):
    w, g = cluttered
    rob = point_robot()
    o = DistanceOracle(g, rob, exact=True)
    p = np.array([0.13, -0.21])
    assert oracle_sadf(o, p) == pytest.approx(float(w.signed_distance(p[None])[0]), abs=1e-12)


def test_dense_not_above_sparse(cluttered):
    _, g = cluttered
    rob = triangle_robot()
    sp = cspace_for(rob)
    o = DistanceOracle(g, rob, space=sp)
    cs = sp.sample(np.random.default_rng(0), 200)
    assert np.all(o(cs) <= o.with_mode("sparse")(cs) + 1e-12)


def test_articulated_is_min_over_links(cluttered):
    _, g = cluttered
    arm = two_link_arm()
    o = DistanceOracle(g, arm, space=cspace_for(arm))
    cs = np.random.default_rng(1).uniform(-math.pi, math.pi, (20, 2))
    per = o.per_link(cs)
    assert per.shape == (20, 2)
    for c, row in zip(cs, per):
        assert articulated_sadf(o, c) == row.min()
    pts = link_points(arm, np.zeros((1, 2)))
    assert np.allclose(pts[1][0, 0], [0.2, 0.0])


def test_collision_check_margin():
    w = Workspace("c", (-0.5, -0.5), (0.5, 0.5), (Circle((0.0, 0.0), 0.1),))
    o = DistanceOracle(build_env_sdf(w, 32), point_robot(), exact=True)
    assert collision_check(o, (0.05, 0.0))
    assert not collision_check(o, (0.3, 0.0))
    assert collision_check(o, (0.3, 0.0), margin=0.2)  # clearance equal to the margin counts
    with pytest.raises(ValueError):
        collision_check(o, (0.3, 0.0), margin=-1)


def test_batch_oracle(cluttered):
    _, g = cluttered
    rob = triangle_robot()
    o = DistanceOracle(g, rob, space=cspace_for(rob))
    assert batch_oracle(o, np.zeros((0, 3))).shape == (0,)
    c = np.array([[0.1, 0.1, 0.3]])
    assert batch_oracle(o, c)[0] == oracle_sadf(o, c[0])
    cs = cspace_for(rob).sample(np.random.default_rng(2), 10)
    assert np.array_equal(batch_oracle(o, cs), [oracle_sadf(o, c) for c in cs])


def test_clip_speed_lower_clip_with_small_d_min():
    p = SpeedModelParams(s_const=1.0, d_min=0.01, d_max=0.2)
    assert clip_speed(0.1, p) == pytest.approx(0.5, abs=1e-12)
    assert clip_speed(-0.3, p) == pytest.approx(0.05, abs=1e-12)


def test_manifold_speed_large_beta_limit():
    assert manifold_speed(0.1, ManifoldSpeedParams(0.2, 1e6)) == pytest.approx(1.0, abs=1e-6)


def test_collision_check_examples():
    w = Workspace("c", (-0.5, -0.5), (0.5, 0.5), (Circle((0.0, 0.0), 0.1),))
    o = DistanceOracle(build_env_sdf(w, 32), point_robot(), exact=True)
    assert not collision_check(o, (0.2, 0.0), margin=0.02)  # clearance 0.1
    assert collision_check(o, (0.09, 0.0), margin=0.0)  # clearance -0.01
    assert collision_check(o, (0.12, 0.0), margin=0.02)  # clearance exactly the margin
