import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eikoplan.scene import (
    N_DENSE, N_SPARSE, SE2, Circle, Polygon, RigidTransform, SceneError, Workspace, apply_transform,
    build_env_sdf, cspace_for, denormalize_points, disc_robot, env_sdf_query, forward_kinematics,
    load_env_sdf, load_robot, load_scene, load_workspace, normalize_workspace, save_env_sdf, save_scene,
    triangle_robot, two_link_arm, workspace_from_dict)


def unit_ws(*obstacles):
    return Workspace("t", (-0.5, -0.5), (0.5, 0.5), tuple(obstacles))


def test_empty_scene_sdf_is_distance_to_bounds(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text(json.dumps({"bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]}, "obstacles": []}))
    w = load_scene(p)
    assert len(w.obstacles) == 0
    g = build_env_sdf(w, 32)
    c = g.centers().reshape(-1, 2)
    to_bounds = np.minimum(0.5 - np.abs(c[:, 0]), 0.5 - np.abs(c[:, 1]))
    assert np.all(g.values.ravel() >= to_bounds - 1e-12)


def test_circle_scene_roundtrip(tmp_path):
    w = workspace_from_dict({"bounds": {"min": [-2, -2], "max": [2, 2]},
                             "obstacles": [{"type": "circle", "center": [0, 0], "radius": 1}]})
    assert len(w.obstacles) == 1
    save_scene(w, tmp_path / "c.json")
    assert load_scene(tmp_path / "c.json") == w


def test_malformed_file_names_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "bounds": {"min": [0, 0],\n   "max": [1 1]}\n}')
    with pytest.raises(SceneError, match="line 3"):
        load_scene(p)


def test_self_intersecting_polygon_reports_index():
    bow = [[0.1, 0.1], [0.3, 0.3], [0.3, 0.1], [0.1, 0.3]]
    doc = {"bounds": {"min": [0, 0], "max": [1, 1]},
           "obstacles": [{"type": "circle", "center": [0.8, 0.8], "radius": 0.05},
                         {"type": "polygon", "vertices": bow}]}
    with pytest.raises(SceneError, match="obstacle 1"):
        workspace_from_dict(doc)


def test_normalize_scales_circle():
    w = Workspace("w", (0, 0), (10, 10), (Circle((5.0, 5.0), 1.0),))
    nw, scale = normalize_workspace(w)
    assert scale == pytest.approx(0.1)
    assert nw.obstacles[0].radius == pytest.approx(0.1)
    assert nw.lower == (-0.5, -0.5) and nw.upper == (0.5, 0.5)


def test_normalize_fixed_point_and_degenerate():
    w = unit_ws(Circle((0.1, 0.0), 0.05))
    nw, scale = normalize_workspace(w)
    assert scale == 1.0 and nw == w
    with pytest.raises(SceneError):
        normalize_workspace(Workspace("z", (0, 0), (0, 1)))


def test_normalize_roundtrip_vertices():
    verts = ((1.0, 2.0), (4.0, 2.5), (3.0, 6.0))
    w = Workspace("w", (0, 0), (8, 8), (Polygon(verts),))
    nw, scale = normalize_workspace(w)
    back = denormalize_points(nw.obstacles[0].array, w, scale)
    assert np.allclose(back, np.asarray(verts), atol=1e-9)


def test_circle_sdf_values():
    g = build_env_sdf(unit_ws(Circle((0.0, 0.0), 0.1)), 64)
    w = g.workspace
    assert w.signed_distance(np.array([[0.0, 0.0]]))[0] == pytest.approx(-0.1)
    assert abs(w.signed_distance(np.array([[0.1, 0.0]]))[0]) < 1e-9
    assert w.signed_distance(np.array([[0.3, 0.0]]))[0] == pytest.approx(0.2)


def test_grid_matches_exact_and_is_lipschitz():
    w = load_workspace("cluttered")
    g = build_env_sdf(w, 64)
    exact = w.signed_distance(g.centers())
    assert np.max(np.abs(g.values - exact)) <= 1e-6
    lim = math.sqrt(2) * g.spacing + 1e-12
    assert np.abs(np.diff(g.values, axis=0)).max() <= lim
    assert np.abs(np.diff(g.values, axis=1)).max() <= lim


def test_query_identities():
    g = build_env_sdf(load_workspace("fixed"), 32)
    c = g.centers()
    assert env_sdf_query(g, c[3, 7])[0] == g.values[3, 7]
    mid = (c[3, 7] + c[4, 7]) / 2
    assert env_sdf_query(g, mid)[0] == pytest.approx((g.values[3, 7] + g.values[4, 7]) / 2, abs=1e-12)


def test_query_out_of_bounds_clamps(caplog):
    g = build_env_sdf(unit_ws(), 32)
    v, clamped = env_sdf_query(g, (0.7, 0.0))
    assert clamped and v < 0
    assert "clamped" in caplog.text


def test_sdf_file_roundtrip(tmp_path):
    g = build_env_sdf(load_workspace("trap"), 32)
    save_env_sdf(g, tmp_path / "t.esdf")
    h = load_env_sdf(tmp_path / "t.esdf")
    assert np.allclose(h.values, g.values.astype(np.float32))
    assert np.allclose(h.origin, g.origin) and h.spacing == pytest.approx(g.spacing)


def test_transform_examples():
    rob = triangle_robot()
    assert np.array_equal(apply_transform(rob, RigidTransform()), rob.dense_points)
    assert np.allclose(RigidTransform(0.0, (0.1, 0.0)).apply(np.array([[0.0, 0.0]])), [[0.1, 0.0]])
    assert np.allclose(RigidTransform(math.pi / 2).apply(np.array([[1.0, 0.0]])), [[0.0, 1.0]], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(-1, 1), st.floats(-1, 1))
def test_transform_is_rigid(angle, tx, ty):
    rob = triangle_robot()
    p = rob.sparse_points
    q = apply_transform(rob, RigidTransform(angle, (tx, ty)), "sparse")
    d0 = np.linalg.norm(p[:, None] - p[None], axis=-1)
    d1 = np.linalg.norm(q[:, None] - q[None], axis=-1)
    assert np.max(np.abs(d0 - d1)) <= 1e-9
    R = RigidTransform(angle).rotation
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_forward_kinematics_examples():
    tf = forward_kinematics((0.0, 0.0), (0.2, 0.15))
    assert np.allclose(tf[1].translation, (0.2, 0.0))
    tf = forward_kinematics((math.pi / 2, 0.0), (0.2, 0.15))
    assert np.allclose(tf[1].translation, (0.0, 0.2), atol=1e-12)
    tf = forward_kinematics((0.3, 1.1), (0.0, 0.0), base=(0.1, 0.2))
    assert all(np.allclose(t.translation, (0.1, 0.2)) for t in tf)


def test_robot_shapes_valid():
    for name in ("triangle", "line", "disc", "point", "arm2"):
        r = load_robot(name)
        assert r.dense_points.shape == (N_DENSE, 2)
        assert r.sparse_points.shape == (N_SPARSE, 2)
    with pytest.raises(SceneError):
        from eikoplan.scene import RobotShape
        RobotShape("bad", np.zeros((N_DENSE, 2)), np.ones((N_SPARSE, 2)))


def test_cspaces():
    assert cspace_for(triangle_robot()).tag == SE2
    assert cspace_for(disc_robot()).tag == "POINT2D"
    sp = cspace_for(two_link_arm())
    assert sp.tag == "JOINT_2LINK" and np.allclose(sp.weights, [0.35, 0.15])
    se2 = cspace_for(triangle_robot())
    a, b = np.array([0.0, 0.0, 3.0]), np.array([0.0, 0.0, -3.0])
    assert se2.distance(a, b) == pytest.approx((2 * math.pi - 6.0) * se2.weights[2])
    assert np.all(se2.wrap(np.array([0, 0, 4.0]))[2] < math.pi)
