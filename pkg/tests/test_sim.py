import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contact_retarget.contact import (
    gripper_at_tip,
    is_freestanding,
    penetration,
    pivot_pose,
    top_contact,
    wall_residual,
)
from contact_retarget.errors import SchemaError, Unreachable, WorkspaceViolation
from contact_retarget.geometry import Pose
from contact_retarget.primitives import ZERO_ACTION, Action, PushPolicy
from contact_retarget.retarget import GoalRegion
from contact_retarget.scene import ObjectModel, Obstacle, Scene, Wall, make_obstacle
from contact_retarget.geometry import Cuboid
from contact_retarget.sim import (
    advance,
    load_jsonl,
    load_states,
    make_state,
    move_robot_to,
    rollout,
    save_jsonl,
    save_trajectory,
    settle_pose,
    state_from_dict,
    state_to_dict,
    step,
    tip_center,
)

BOX = ObjectModel.from_half_extents("box", (0.1, 0.075, 0.03))
SCENE = Scene(Wall(0.75, 0.0))
GM = SCENE.gripper


def flat(x, y=0.0, yaw=0.0):
    return Pose.from_xyz_yaw(x, y, 0.03, yaw)


def side_state(x: Pose):
    tip = x.transform_points([[-0.1, 0.0, 0.0]])[0]
    return make_state(x, gripper_at_tip(tip, GM), SCENE, BOX)


def free_state(x: Pose, tip=(0.3, 0.0, 0.3)):
    return make_state(x, gripper_at_tip(tip, GM), SCENE, BOX)


class TestStep:
    def test_no_contact_leaves_object(self):
        s = free_state(flat(0.4))
        s2 = step(s, Action((0.005, 0, 0)), SCENE, BOX)
        assert s2.object_pose == s.object_pose
        assert np.allclose(tip_center(s2.gripper, SCENE), [0.305, 0, 0.3])

    def test_sticky_push(self):
        s = side_state(flat(0.4))
        s2 = step(s, Action((0.005, 0, 0)), SCENE, BOX)
        assert np.allclose(s2.object_pose.position, [0.405, 0, 0.03])

    def test_push_into_wall_clips(self):
        s = side_state(flat(0.648))
        res = advance(s, Action((0.005, 0, 0)), SCENE, BOX)
        assert res.fraction == pytest.approx(0.4, abs=1e-4)
        assert "clipped" in res.events
        assert np.abs(wall_residual(res.state.object_pose, BOX, SCENE)).max() <= 1e-6
        assert penetration(res.state.object_pose, BOX, SCENE) <= 1e-7
        assert tip_center(res.state.gripper, SCENE)[0] == pytest.approx(0.55, abs=1e-6)

    def test_workspace(self):
        s = free_state(flat(0.4), tip=(0.3, 0.748, 0.3))
        with pytest.raises(WorkspaceViolation):
            step(s, Action((0, 0.005, 0)), SCENE, BOX)

    def test_finger_cannot_enter_obstacle(self):
        sc = Scene(Wall(0.75), (make_obstacle("1", (0.0, 0.4)),))
        top = 0.077
        s = make_state(flat(0.4), gripper_at_tip((0.0, 0.4, top + 0.003), GM), sc, BOX)
        res = advance(s, Action((0, 0, -0.005)), sc, BOX)
        assert tip_center(res.state.gripper, sc)[2] == pytest.approx(top, abs=1e-6)

    def test_settles_when_released_mid_pivot(self):
        x = pivot_pose(flat(0.65), BOX, SCENE, math.radians(40))
        s = free_state(x)
        s2 = step(s, ZERO_ACTION, SCENE, BOX)
        assert is_freestanding(s2.object_pose, BOX, SCENE)

    def test_settle_pose_lands_flat(self):
        x = Pose((0.4, 0, 0.2), (0.9, 0.3, 0.2, 0.1))
        p = settle_pose(x, BOX, Scene())
        assert is_freestanding(p, BOX, Scene())

    @settings(max_examples=30)
    @given(st.floats(0.3, 0.5), st.floats(-0.2, 0.2), st.floats(-math.pi, math.pi),
           st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=20))
    def test_freestanding_fixpoint(self, x, y, yaw, moves):
        s = free_state(flat(x, y, yaw), tip=(0.2, 0.5, 0.4))
        for m in moves:
            a = Action(np.array(m) * 0.005 / max(1.0, np.linalg.norm(m)))
            s2 = step(s, a, SCENE, BOX)
            if not s.flags.finger_contact and not s2.flags.finger_contact:
                assert s2.object_pose == s.object_pose
            s = s2

    def test_hundred_idle_steps(self):
        s = free_state(flat(0.4, 0.1, 0.3))
        x0 = s.object_pose
        for _ in range(100):
            s = step(s, ZERO_ACTION, SCENE, BOX)
        assert s.object_pose == x0


class TestRollout:
    def test_start_in_goal(self):
        s = side_state(flat(0.4))
        traj = rollout(PushPolicy(), s, GoalRegion(flat(0.4)), SCENE, BOX)
        assert traj.outcome.reached and traj.actions == []

    def test_corridor(self):
        s = side_state(flat(0.3))
        traj = rollout(PushPolicy(), s, GoalRegion(flat(0.5)), SCENE, BOX)
        assert traj.outcome.reached
        assert len(traj.actions) <= 60

    def test_timeout(self):
        s = side_state(flat(0.3))
        traj = rollout(PushPolicy(), s, GoalRegion(flat(0.5)), SCENE, BOX, max_steps=5)
        assert traj.outcome.kind == "timeout"
        assert len(traj.actions) == 5

    def test_deterministic(self):
        def run():
            s = side_state(flat(0.3, 0.05, 0.2))
            return rollout(PushPolicy(), s, GoalRegion(flat(0.5, -0.05, -0.3)), SCENE, BOX)
        a, b = run(), run()
        assert a.states == b.states and a.actions == b.actions


class TestMoveRobot:
    def test_object_untouched(self):
        s = free_state(flat(0.4))
        s2 = move_robot_to(s, top_contact(s.object_pose, BOX, GM), SCENE, BOX)
        assert s2.object_pose == s.object_pose
        assert s2.flags.finger_object_top

    def test_below_ground(self):
        s = free_state(flat(0.4))
        with pytest.raises(Unreachable):
            move_robot_to(s, gripper_at_tip((0.2, 0, -0.01), GM), SCENE, BOX)

    def test_over_tall_obstacle(self):
        tower = Obstacle("tower", Cuboid((0.05, 0.05, 0.25)), (0.2, 0.0))
        sc = Scene(Wall(0.75), (tower,))
        s = make_state(flat(0.45), gripper_at_tip((0.0, 0.0, 0.3), GM), sc, BOX)
        with pytest.raises(Unreachable):
            move_robot_to(s, top_contact(s.object_pose, BOX, GM), sc, BOX)

    def test_descent_through_object(self):
        s = free_state(flat(0.4))
        with pytest.raises(Unreachable):
            move_robot_to(s, gripper_at_tip((0.4, 0, 0.0), GM), SCENE, BOX)


class TestSerialisation:
    def test_round_trip_bit_exact(self, tmp_path):
        s = side_state(flat(0.3, 0.05, 0.2))
        traj = rollout(PushPolicy(), s, GoalRegion(flat(0.5, -0.05, -0.3)), SCENE, BOX)
        save_trajectory(traj, tmp_path / "t.jsonl")
        back = load_states(tmp_path / "t.jsonl")
        assert back == traj.states

    def test_header_skipped(self, tmp_path):
        s = side_state(flat(0.3))
        save_jsonl(tmp_path / "t.jsonl", [{"header": {"x": 1}}, state_to_dict(s)])
        assert load_states(tmp_path / "t.jsonl") == [s]
        assert load_jsonl(tmp_path / "t.jsonl")[0] == {"header": {"x": 1}}

    def test_bad_record(self):
        with pytest.raises(SchemaError):
            state_from_dict({"object": {}})
