import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contact_retarget.contact import EnvContact, RobotContact, gripper_at_tip, pivot_pose, top_contact
from contact_retarget.errors import PolicyFailure
from contact_retarget.geometry import Pose, signed_distance_point_plane
from contact_retarget.primitives import (
    MAX_STEP_ROTATION,
    MAX_STEP_TRANSLATION,
    ZERO_ACTION,
    Action,
    GraspPolicy,
    PivotPolicy,
    PrimitiveKind,
    PullPolicy,
    PushPolicy,
    make_policy,
    pivot_policy,
    push_policy,
    register_primitive,
    registered_kinds,
    required_contact,
)
from contact_retarget.retarget import GoalRegion, antipodal_config, standoff_config
from contact_retarget.scene import ObjectModel, Scene, Wall, make_obstacle, wall_plane
from contact_retarget.sim import make_state, rollout

BOX = ObjectModel.from_half_extents("box", (0.1, 0.075, 0.03))
SCENE = Scene(Wall(0.75, 0.0))
GM = SCENE.gripper
G, W = EnvContact.GROUND, EnvContact.WALL


def flat(x, y=0.0, yaw=0.0, obj=BOX):
    return Pose.from_xyz_yaw(x, y, float(obj.half_extents[2]), yaw)


def side_state(x: Pose, scene=SCENE, obj=BOX):
    """Closed fingers touching the body -x face at mid height."""
    tip = x.transform_points([[-obj.half_extents[0], 0.0, 0.0]])[0]
    return make_state(x, gripper_at_tip(tip, scene.gripper), scene, obj)


def top_state(x: Pose, scene=SCENE, obj=BOX):
    return make_state(x, top_contact(x, obj, scene.gripper), scene, obj)


class TestRequiredContact:
    def test_table(self):
        assert required_contact(PrimitiveKind.PUSH).env == {G}
        assert required_contact(PrimitiveKind.PUSH).robot is RobotContact.NONE
        assert required_contact(PrimitiveKind.PIVOT).env == {G, W}
        assert required_contact(PrimitiveKind.PIVOT).robot is RobotContact.ANTIPODAL
        assert required_contact(PrimitiveKind.PULL).env == {G}
        assert required_contact(PrimitiveKind.PULL).robot is RobotContact.TOP
        assert required_contact(PrimitiveKind.GRASP).robot is RobotContact.GRASP

    def test_registry(self):
        assert set(registered_kinds()) >= set(PrimitiveKind)
        assert isinstance(make_policy(PrimitiveKind.PULL), PullPolicy)

    def test_register_custom(self):
        from contact_retarget.contact import ContactConfig
        from contact_retarget.primitives import _REGISTRY, _REQUIRED
        key = "noop"
        register_primitive(key, lambda: (lambda *a: ZERO_ACTION), ContactConfig({G}, RobotContact.NONE))
        try:
            assert make_policy(key)(None, None, None, None) is ZERO_ACTION
            assert required_contact(key).env == {G}
        finally:
            _REGISTRY.pop(key)
            _REQUIRED.pop(key)


class TestAction:
    def test_bounds(self):
        assert Action((0.005, 0, 0)).within_bounds()
        assert not Action((0.0051, 0, 0)).within_bounds()
        assert not Action(rotation=(0, 0, MAX_STEP_ROTATION * 1.01)).within_bounds()
        assert ZERO_ACTION.is_zero


class TestPush:
    def test_saturated_step(self):
        s = side_state(flat(0.4))
        a = push_policy(s, GoalRegion(flat(0.6)), SCENE, BOX)
        assert np.allclose(a.translation, [MAX_STEP_TRANSLATION, 0, 0])
        assert np.allclose(a.rotation, 0)

    def test_in_goal(self):
        s = side_state(flat(0.4))
        assert push_policy(s, GoalRegion(flat(0.405)), SCENE, BOX) is ZERO_ACTION

    def test_goal_behind_retracts(self):
        s = side_state(flat(0.4))
        a = push_policy(s, GoalRegion(flat(0.2)), SCENE, BOX)
        assert a.translation[2] > 0
        assert abs(a.translation[0]) < 1e-12

    def test_corridor(self):
        s = side_state(flat(0.3))
        traj = rollout(PushPolicy(), s, GoalRegion(flat(0.5)), SCENE, BOX)
        assert traj.outcome.reached
        assert len(traj.actions) <= 60
        assert all(a.within_bounds() for a in traj.actions)

    def test_onto_wall_with_contacts(self):
        s = side_state(flat(0.45))
        goal = GoalRegion(flat(0.65), contacts={G, W}, freestanding=True)
        traj = rollout(PushPolicy(), s, goal, SCENE, BOX)
        assert traj.outcome.reached

    @settings(max_examples=15)
    @given(st.floats(-0.15, 0.15), st.floats(-0.15, 0.15), st.floats(-0.5, 0.5))
    def test_free_corridor_reaches_goal(self, dx, dy, dyaw):
        s = side_state(flat(0.35))
        goal = GoalRegion(flat(0.35 + dx, dy, dyaw))
        s = make_state(s.object_pose, standoff_config(s.object_pose, BOX, GM), Scene(), BOX)
        traj = rollout(PushPolicy(), s, goal, Scene(), BOX, 2000)
        assert traj.outcome.reached, traj.outcome
        assert all(a.within_bounds() for a in traj.actions)


class TestPull:
    def test_plan_arithmetic(self):
        s = top_state(flat(0.5))
        plan = PullPolicy.make_plan(s, GoalRegion(flat(0.4)), SCENE)
        assert len(plan) == 20
        assert all(np.allclose(a.translation, [-0.005, 0, 0]) for a in plan)

    def test_empty_plan(self):
        s = top_state(flat(0.5))
        assert PullPolicy.make_plan(s, GoalRegion(flat(0.5)), SCENE) == []

    def test_open_loop_replay(self):
        s = top_state(flat(0.5, 0.02, 0.1))
        goal = GoalRegion(flat(0.38, -0.05, -0.2))
        a, b = PullPolicy.make_plan(s, goal, SCENE), PullPolicy.make_plan(s, goal, SCENE)
        assert a == b

    def test_reaches_goal(self):
        s = top_state(flat(0.5, 0.02, 0.1))
        traj = rollout(PullPolicy(), s, GoalRegion(flat(0.38, -0.05, -0.2)), SCENE, BOX)
        assert traj.outcome.reached

    def test_blocked_by_obstacle(self):
        sc = Scene(Wall(0.75), (make_obstacle("1", (0.1, 0.0)),))
        s = top_state(flat(0.45), sc)
        goal = GoalRegion(flat(0.0))
        plan = PullPolicy.make_plan(s, goal, sc)
        assert len(plan) == 90
        traj = rollout(PullPolicy(), s, goal, sc, BOX)
        assert traj.outcome.kind == "failure" and traj.outcome.reason == "blocked"


class TestPivot:
    def start(self, obj=BOX, scene=SCENE):
        x = flat(scene.wall.center_x - float(obj.half_extents[0]), obj=obj)
        return make_state(x, antipodal_config(x, obj, scene), scene, obj)

    def test_45_steps_of_2_degrees(self):
        s = self.start()
        goal = GoalRegion(pivot_pose(s.object_pose, BOX, SCENE, math.pi / 2))
        plan = PivotPolicy.make_plan(s, goal, SCENE, BOX)
        assert len(plan) == 45
        assert all(math.degrees(np.linalg.norm(a.rotation)) == pytest.approx(2.0) for a in plan)

    def test_in_goal(self):
        s = self.start()
        up = pivot_pose(s.object_pose, BOX, SCENE, math.pi / 2)
        s = make_state(up, s.gripper, SCENE, BOX)
        assert pivot_policy(s, GoalRegion(up), SCENE, BOX) is ZERO_ACTION

    def test_no_wall(self):
        s = self.start()
        goal = GoalRegion(pivot_pose(s.object_pose, BOX, SCENE, math.pi / 2))
        with pytest.raises(PolicyFailure, match="precondition: wall"):
            pivot_policy(make_state(s.object_pose, s.gripper, Scene(), BOX), goal, Scene(), BOX)

    @pytest.mark.parametrize("yaw", [-10.0, 0.0, 8.0])
    def test_edge_stays_put(self, yaw):
        sc = Scene(Wall(0.78, yaw))
        n = sc.wall.normal
        c = sc.wall.center + 0.1 * n
        x = Pose.from_xyz_yaw(c[0], c[1], 0.03, sc.wall.yaw)
        s = make_state(x, antipodal_config(x, BOX, sc), sc, BOX)
        pol = PivotPolicy()
        goal = GoalRegion(pivot_pose(x, BOX, sc, math.pi / 2), contacts={G, W}, freestanding=True)
        traj = rollout(pol, s, goal, sc, BOX)
        assert traj.outcome.reached
        # the tracked edge slides up the wall but must never leave it
        plane = wall_plane(sc)
        drift = max(float(np.abs(signed_distance_point_plane(pol.pivot_edge(st.object_pose), plane)).max())
                    for st in traj.states)
        assert drift < 1e-3

    def test_not_a_tangent_turn(self):
        s = self.start()
        goal = GoalRegion(Pose(s.object_pose.position, Pose.from_xyz_yaw(0, 0, 0, 0.6).quaternion))
        with pytest.raises(PolicyFailure, match="not a turn"):
            PivotPolicy.make_plan(s, goal, SCENE, BOX)


class TestGrasp:
    def upright_state(self, gap):
        obj = ObjectModel.from_half_extents("b", (0.1, 0.03, 0.03))
        up = pivot_pose(flat(0.65, obj=obj), obj, SCENE, math.pi / 2)
        up = Pose(up.position + gap * SCENE.wall.normal, up.quaternion)
        s = make_state(up, gripper_at_tip((0.4, 0.0, 0.35), GM), SCENE, obj)
        return obj, s

    def test_four_phases_and_lift(self):
        obj, s = self.upright_state(0.03)
        lifted = Pose(s.object_pose.position + [0, 0, 0.10], s.object_pose.quaternion)
        pol = GraspPolicy()
        traj = rollout(pol, s, GoalRegion(lifted), SCENE, obj)
        assert traj.outcome.reached
        end = traj.states[-1]
        assert end.attached
        assert end.object_pose.position[2] - s.object_pose.position[2] == pytest.approx(0.10, abs=0.01)
        assert end.flags.finger_contact
        assert abs(end.gripper.opening - 0.06) <= 1e-3
        assert "attach" in [e for _, e in traj.events]

    def test_attached_in_goal(self):
        obj, s = self.upright_state(0.03)
        from dataclasses import replace
        s = replace(s, attached=True)
        assert GraspPolicy()(s, GoalRegion(s.object_pose), SCENE, obj) is ZERO_ACTION

    def test_single_face_close(self):
        from contact_retarget.sim import _close
        obj = ObjectModel.from_half_extents("b", (0.03, 0.03, 0.03))
        x = Pose((0.4, 0.0, 0.03))
        # fingers 8 cm apart but shifted so the box sticks out past one finger
        g = gripper_at_tip((0.4, 0.05, 0.03), GM, opening=0.08)
        g2, attached, events = _close(g, -0.08, x, obj, SCENE)
        assert not attached
        assert events == ["grasp: single-face contact"]
