import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contact_retarget.errors import InvalidScene, MissingWall, SchemaError
from contact_retarget.scene import (
    OBSTACLE_DIMS,
    GripperModel,
    Scene,
    Wall,
    load_scene,
    make_obstacle,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    wall_plane,
)


def test_demo_wall_plane():
    pl = wall_plane(Scene(Wall(0.75, 0.0)))
    assert np.allclose(pl.point, [0.75, 0, 0])
    assert np.allclose(pl.normal, [-1, 0, 0])


def test_yawed_wall_normal_is_rotated_minus_x():
    yaw = math.radians(-8.5)
    rz = np.array([[math.cos(yaw), -math.sin(yaw), 0], [math.sin(yaw), math.cos(yaw), 0], [0, 0, 1]])
    pl = wall_plane(Scene(Wall(0.775, -8.5)))
    assert np.allclose(pl.normal, rz @ [-1, 0, 0], atol=1e-12)


def test_yaw_periodic():
    a, b = wall_plane(Scene(Wall(0.8, 0.0))), wall_plane(Scene(Wall(0.8, 360.0)))
    assert np.allclose(a.normal, b.normal, atol=1e-9) and np.allclose(a.point, b.point)


@given(st.floats(0.5, 1.0), st.floats(-180, 180))
def test_normal_horizontal_unit(x, yaw):
    n = wall_plane(Scene(Wall(x, yaw))).normal
    assert abs(n[2]) < 1e-12
    assert abs(np.linalg.norm(n) - 1) < 1e-12


@given(st.floats(0.5, 1.0), st.floats(-30, 30))
def test_normal_points_toward_origin(x, yaw):
    w = Wall(x, yaw)
    assert float(-w.center @ w.normal) > 0


def test_slab_is_behind_plane():
    w = Wall(0.75, 0.0)
    box, pose = w.slab()
    from contact_retarget.geometry import corners
    c = corners(box, pose)
    assert c[:, 0].min() == pytest.approx(0.75)
    assert c[:, 2].max() == pytest.approx(w.height)


def test_bad_wall():
    with pytest.raises(InvalidScene):
        Wall(0.75, 0.0, height=0.0)


def test_missing_wall():
    with pytest.raises(MissingWall):
        wall_plane(Scene())


def test_retrieval_scene_file(tmp_path):
    d = {"wall": {"center_x": 0.80, "yaw_deg": 0.0},
         "obstacles": [{"name": "2", "half_extents": [0.0925, 0.1175, 0.07], "center_xy": [-0.19, 0.54]},
                       {"name": "3", "half_extents": [0.105, 0.1275, 0.0815], "center_xy": [0.238, 0.353]}]}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    s = load_scene(p)
    assert len(s.obstacles) == 2
    assert s.obstacles[1].center_xy == (0.238, 0.353)


def test_obstacle_dims():
    assert OBSTACLE_DIMS["2"] == (0.185, 0.235, 0.140)
    o = make_obstacle("2", (0.0, 0.0))
    assert np.allclose(2 * o.box.half_extents, (0.185, 0.235, 0.140))
    assert o.pose.position[2] == pytest.approx(0.07)


def test_coincident_obstacles():
    with pytest.raises(InvalidScene):
        Scene(None, (make_obstacle("1", (0.0, 0.3)), make_obstacle("2", (0.0, 0.3))))


def test_obstacle_in_wall():
    with pytest.raises(InvalidScene):
        Scene(Wall(0.75), (make_obstacle("1", (0.75, 0.0)),))


def test_round_trip_bit_exact(tmp_path):
    s = Scene(Wall(0.7712345678901234, -8.123456789), (make_obstacle("3", (0.238, 0.353)),),
              GripperModel(finger_thickness=0.0123))
    p = tmp_path / "scene.json"
    save_scene(s, p)
    t = load_scene(p)
    assert t == s
    assert scene_to_dict(t) == scene_to_dict(s)


@given(st.floats(0.5, 1.0), st.floats(-90, 90), st.floats(0.05, 0.3))
def test_round_trip_property(x, yaw, h):
    s = Scene(Wall(x, yaw, height=h))
    assert scene_from_dict(json.loads(json.dumps(scene_to_dict(s)))) == s


@pytest.mark.parametrize("d", [
    {"walls": None},
    {"wall": {"yaw_deg": 1.0}},
    {"wall": {"center_x": "far"}},
    {"obstacles": [{"half_extents": [1, 2], "center_xy": [0, 0]}]},
    {"gripper": {"max_opening": "wide"}},
    [],
])
def test_schema_errors(d):
    with pytest.raises(SchemaError):
        scene_from_dict(d)


def test_blockers_include_wall():
    s = Scene(Wall(0.8), (make_obstacle("1", (0.0, 0.3)),))
    names = [n for n, _, _ in s.blockers()]
    assert names == ["1", "wall"]


def test_workspace_contains_fixed_obstacles():
    g = GripperModel()
    for xy in [(-0.071, 0.146), (0.108, 0.312), (-0.19, 0.54), (0.238, 0.353)]:
        assert g.in_workspace((*xy, 0.1))
