"""Primitive library: contact requirements, actions and scripted policies.

A policy is a callable ``policy(state, goal, scene, obj) -> Action | Failure``
that may keep private plan state between calls; ``make_policy`` returns a
fresh instance per rollout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .contact import ContactConfig, EnvContact, RobotContact

MAX_STEP_TRANSLATION = 0.005
MAX_STEP_ROTATION = math.radians(2.0)


class PrimitiveKind(enum.Enum):
    PUSH = "push"
    PULL = "pull"
    PIVOT = "pivot"
    GRASP = "grasp"


_REQUIRED = {
    PrimitiveKind.PUSH: ContactConfig({EnvContact.GROUND}, RobotContact.NONE),
    PrimitiveKind.PULL: ContactConfig({EnvContact.GROUND}, RobotContact.TOP),
    PrimitiveKind.PIVOT: ContactConfig({EnvContact.GROUND, EnvContact.WALL}, RobotContact.ANTIPODAL),
    PrimitiveKind.GRASP: ContactConfig({EnvContact.GROUND}, RobotContact.GRASP),
}


def required_contact(kind: PrimitiveKind) -> ContactConfig:
    return _REQUIRED[kind]


@dataclass(frozen=True, eq=False)
class Action:
    """Gripper increment: world translation, world rotation vector, finger delta."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    finger: float = 0.0

    def __post_init__(self):
        for name in ("translation", "rotation"):
            v = np.array(getattr(self, name), dtype=float).reshape(3)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "finger", float(self.finger))

    @property
    def is_zero(self) -> bool:
        return not (self.translation.any() or self.rotation.any() or self.finger)

    def within_bounds(self, slack: float = 1e-12) -> bool:
        return (float(np.linalg.norm(self.translation)) <= MAX_STEP_TRANSLATION + slack
                and float(np.linalg.norm(self.rotation)) <= MAX_STEP_ROTATION + slack)

    def __eq__(self, other):
        return (isinstance(other, Action) and np.array_equal(self.translation, other.translation)
                and np.array_equal(self.rotation, other.rotation) and self.finger == other.finger)

    def __hash__(self):
        return hash((self.translation.tobytes(), self.rotation.tobytes(), self.finger))

    def to_list(self) -> list[float]:
        return [*map(float, self.translation), *map(float, self.rotation), self.finger]


ZERO_ACTION = Action()


# ---------------------------------------------------------------------------
# motion helpers

def _yaw_of(r: np.ndarray) -> float:
    return math.atan2(r[1, 0], r[0, 0])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def relative_rotation_to_goal(x, goal_center) -> np.ndarray:
    """World rotation vector taking ``x`` to the nearest box-equivalent goal frame."""
    from .geometry import box_symmetric_quaternions, quat_conj, quat_mul, quat_to_rotvec

    best = None
    for qg in box_symmetric_quaternions(goal_center.quaternion):
        v = quat_to_rotvec(quat_mul(qg, quat_conj(x.quaternion)))
        n = float(np.linalg.norm(v))
        if best is None or n < best[0] - 1e-12:
            best = (n, v)
    return best[1]


def _steps(total: float, bound: float) -> int:
    return max(1, math.ceil(total / bound - 1e-9))


def move_action(c_now, c_target, r_now=None, r_target=None, finger: float = 0.0) -> Action:
    """One bounded step of the fingertip midpoint (and hand rotation) toward a target."""
    dt = np.asarray(c_target, dtype=float) - np.asarray(c_now, dtype=float)
    w = np.zeros(3)
    if r_now is not None and r_target is not None:
        from .geometry import matrix_to_rotvec

        w = matrix_to_rotvec(np.asarray(r_target) @ np.asarray(r_now).T)
    n = max(_steps(float(np.linalg.norm(dt)), MAX_STEP_TRANSLATION),
            _steps(float(np.linalg.norm(w)), MAX_STEP_ROTATION))
    return Action(dt / n, w / n, finger)


def _at(c_now, c_target, r_now=None, r_target=None, tol: float = 1e-9) -> bool:
    if float(np.linalg.norm(np.asarray(c_target) - np.asarray(c_now))) > tol:
        return False
    if r_now is not None and r_target is not None:
        return float(np.abs(np.asarray(r_target) - np.asarray(r_now)).max()) <= 1e-9
    return True


def _planar_step(p, psi_left, delta, c, max_lever_rot=MAX_STEP_ROTATION):
    """Gripper translation/rotation moving the object by ``delta`` and turning it
    toward ``psi_left`` while it rotates rigidly about the fingertip ``c``."""
    arm = float(np.linalg.norm((p - c)[:2]))
    cap = MAX_STEP_ROTATION
    if arm > 1e-9:
        cap = min(cap, 0.8 * MAX_STEP_TRANSLATION / arm)
    w = max(-cap, min(cap, psi_left))
    rz = _rot_z(w)
    n = _steps(float(np.linalg.norm(delta)), MAX_STEP_TRANSLATION)
    while True:
        t = p + delta / n - c - rz @ (p - c)
        t[2] = 0.0
        if float(np.linalg.norm(t)) <= MAX_STEP_TRANSLATION + 1e-12 or n > 100000:
            return t, w
        n += 1


# ---------------------------------------------------------------------------
# policies

def _gm(scene):
    return scene.gripper


def _tip(state, scene) -> np.ndarray:
    g = state.gripper
    return g.pose.position + g.pose.rotation[:, 2] * _gm(scene).finger_length


def _horizontal_faces(x, obj):
    """(axis, sign, outward normal) of the four side faces."""
    from .contact import support_axis

    k, _ = support_axis(x)
    out = []
    for a in (i for i in range(3) if i != k):
        for s in (1.0, -1.0):
            n = s * x.rotation[:, a].copy()
            n[2] = 0.0
            n /= np.linalg.norm(n)
            out.append((a, s, n))
    return out


def _face_point(x, obj, face) -> np.ndarray:
    a, s, _ = face
    return x.position + s * obj.half_extents[a] * x.rotation[:, a]


def _clear_point(p, scene, margin: float = 0.005) -> bool:
    from .geometry import point_box_signed_distance, signed_distance_point_plane
    from .scene import wall_plane

    if scene.wall is not None:
        s = float((p - scene.wall.center) @ scene.wall.tangent)
        if abs(s) <= 0.5 * scene.wall.length + margin and signed_distance_point_plane(p, wall_plane(scene)) < margin:
            return False
    for _, box, pose in scene.blockers():
        if point_box_signed_distance(p, box, pose) < margin:
            return False
    return True


class PushPolicy:
    """Scripted side push with sticky contact.

    Picks the side face whose inward normal best matches the direction to the
    goal, approaches it from above, then drags the object rigidly onto the
    goal centre.  Changes face (lifting 5 cm first) when the current face's
    heading error exceeds the best face's by more than 15 degrees.
    """

    approach_offset = 0.01
    retract_height = 0.05
    switch_threshold = math.radians(15.0)

    def __init__(self):
        self.face = None
        self.waypoints: list[np.ndarray] = []

    @staticmethod
    def heading_error(face, delta) -> float:
        d = np.asarray(delta[:2], dtype=float)
        nd = float(np.linalg.norm(d))
        if nd < 1e-12:
            return 0.0
        c = float(-face[2][:2] @ d) / nd
        return math.acos(max(-1.0, min(1.0, c)))

    def _contact_face(self, state, obj, scene):
        if not state.flags.finger_object_side:
            return None
        tip = _tip(state, scene)
        x = state.object_pose
        local = x.rotation.T @ (tip - x.position)
        i = int(np.argmax(np.abs(local) - obj.half_extents))
        s = 1.0 if local[i] > 0 else -1.0
        for face in _horizontal_faces(x, obj):
            if face[0] == i and face[1] == s:
                return face
        return None

    def _plan_approach(self, state, obj, scene, face, lift: float):
        from .geometry import corners

        x = state.object_pose
        tip = _tip(state, scene)
        fp = _face_point(x, obj, face)
        a = fp + self.approach_offset * face[2]
        tops = [float(corners(obj.box, x)[:, 2].max())]
        tops += [float(corners(b, p)[:, 2].max()) for _, b, p in scene.blockers()]
        z_travel = max(max(tops) + 0.03, tip[2] + lift)
        self.waypoints = [
            np.array([tip[0], tip[1], z_travel]),
            np.array([a[0], a[1], z_travel]),
            a,
            fp,
        ]
        self.face = face

    def __call__(self, state, goal, scene, obj) -> Action:
        from .errors import PolicyFailure

        x = state.object_pose
        if goal.contains(x, obj, scene):
            return ZERO_ACTION
        delta = goal.center.position - x.position
        delta[2] = 0.0
        psi_left = float(relative_rotation_to_goal(x, goal.center)[2])
        if self.waypoints:
            tip = _tip(state, scene)
            if _at(tip, self.waypoints[0]):
                self.waypoints.pop(0)
            if self.waypoints:
                return move_action(tip, self.waypoints[0])
        faces = [f for f in _horizontal_faces(x, obj)
                 if _clear_point(_face_point(x, obj, f) + self.approach_offset * f[2], scene)]
        if not faces:
            raise PolicyFailure("push: no face can be approached")
        best = min(faces, key=lambda f: (self.heading_error(f, delta), f[0], -f[1]))
        current = self._contact_face(state, obj, scene)
        if current is None:
            self._plan_approach(state, obj, scene, best, 0.0)
            return self(state, goal, scene, obj)
        if (float(np.linalg.norm(delta)) > 1e-3
                and self.heading_error(current, delta) - self.heading_error(best, delta) > self.switch_threshold):
            self._plan_approach(state, obj, scene, best, self.retract_height)
            return self(state, goal, scene, obj)
        if float(np.linalg.norm(delta)) < 1e-12 and abs(psi_left) < 1e-12:
            raise PolicyFailure("push: at goal centre but goal contacts unmet")
        t, w = _planar_step(x.position, psi_left, delta, _tip(state, scene))
        return Action(t, (0.0, 0.0, w))


class PullPolicy:
    """Open-loop drag from the top: the plan is fixed at the first call."""

    def __init__(self):
        self.plan: list[Action] | None = None

    @staticmethod
    def make_plan(state, goal, scene) -> list[Action]:
        x = state.object_pose
        p = x.position.copy()
        c = _tip(state, scene)
        delta = goal.center.position - p
        delta[2] = 0.0
        psi = float(relative_rotation_to_goal(x, goal.center)[2])
        n = max(_steps(float(np.linalg.norm(delta)), MAX_STEP_TRANSLATION), _steps(abs(psi), MAX_STEP_ROTATION))
        if float(np.linalg.norm(delta)) < 1e-12 and abs(psi) < 1e-12:
            return []
        while True:
            plan, pp, cc, ok = [], p.copy(), c.copy(), True
            w = psi / n
            rz = _rot_z(w)
            for i in range(n):
                target = p + delta * (i + 1) / n
                t = target - cc - rz @ (pp - cc)
                t[2] = 0.0
                if float(np.linalg.norm(t)) > MAX_STEP_TRANSLATION + 1e-12:
                    ok = False
                    break
                plan.append(Action(t, (0.0, 0.0, w)))
                pp = cc + t + rz @ (pp - cc)
                cc = cc + t
            if ok:
                return plan
            n += 1

    def __call__(self, state, goal, scene, obj) -> Action:
        from .errors import PolicyFailure

        if self.plan is None:
            self.plan = self.make_plan(state, goal, scene)
        if not self.plan and goal.contains(state.object_pose, obj, scene):
            return ZERO_ACTION
        if not self.plan:
            raise PolicyFailure("plan exhausted")
        return self.plan.pop(0)


class PivotPolicy:
    """Tilt the object about the wall tangent until it matches the goal.

    The plan (angle per step and a tangential slide that lands the object on
    the goal centre) is fixed from the start state; during execution only the
    pivot edge's wall distance is watched.
    """

    lost_contact = 0.005

    def __init__(self):
        self.plan: list[Action] | None = None
        self.edge_local = None

    @staticmethod
    def make_plan(state, goal, scene, obj) -> list[Action]:
        from .contact import pivot_axis, pivot_pose
        from .errors import PolicyFailure
        from .geometry import box_symmetric_quaternions, quat_conj, quat_mul, quat_to_rotvec

        x = state.object_pose
        k = pivot_axis(scene)
        best = None
        for qg in box_symmetric_quaternions(goal.center.quaternion):
            v = quat_to_rotvec(quat_mul(qg, quat_conj(x.quaternion)))
            phi = float(v @ k)
            off = float(np.linalg.norm(v - phi * k))
            if phi >= 0.0 and (best is None or off < best[1] - 1e-12):
                best = (phi, off)
        if best is None or best[1] > math.radians(10.0):
            raise PolicyFailure("pivot: goal is not a turn about the wall tangent")
        phi = best[0]
        end = pivot_pose(x, obj, scene, phi)
        slide = float((goal.center.position - end.position) @ scene.wall.tangent)
        if phi < 1e-12 and abs(slide) < 1e-12:
            return []
        n = max(_steps(phi, MAX_STEP_ROTATION), _steps(abs(slide), MAX_STEP_TRANSLATION))
        step = Action(slide / n * scene.wall.tangent, phi / n * k)
        return [step] * n

    def __call__(self, state, goal, scene, obj) -> Action:
        from .contact import wall_contact_points
        from .errors import PolicyFailure
        from .geometry import signed_distance_point_plane
        from .scene import wall_plane

        if scene.wall is None:
            raise PolicyFailure("precondition: wall")
        x = state.object_pose
        if self.plan is None:
            if goal.contains(x, obj, scene):
                return ZERO_ACTION
            self.plan = self.make_plan(state, goal, scene, obj)
            self.edge_local = (wall_contact_points(x, obj, scene) - x.position) @ x.rotation
        edge = self.edge_local @ x.rotation.T + x.position
        if float(np.abs(signed_distance_point_plane(edge, wall_plane(scene))).max()) > self.lost_contact:
            raise PolicyFailure("lost contact")
        if not self.plan:
            raise PolicyFailure("plan exhausted")
        return self.plan.pop(0)

    def pivot_edge(self, x) -> np.ndarray:
        return self.edge_local @ x.rotation.T + x.position


class GraspPolicy:
    """Top-down grasp: above the grasp pose, descend, close, lift onto the goal."""

    clearance = 0.10

    def __init__(self):
        self.phase = None
        self.target = None
        self.lift_to = None

    def __call__(self, state, goal, scene, obj) -> Action:
        from .contact import grasp_config
        from .errors import PolicyFailure

        gm = _gm(scene)
        g = state.gripper
        tip = _tip(state, scene)
        if self.phase is None:
            if state.attached and goal.contains(state.object_pose, obj, scene):
                return ZERO_ACTION
            self.target = grasp_config(state.object_pose, obj, gm, scene)
            self.phase = "above"
        tgt = self.target
        tgt_tip = tgt.pose.position + tgt.pose.rotation[:, 2] * gm.finger_length
        r_now, r_tgt = g.pose.rotation, tgt.pose.rotation
        if self.phase == "above":
            above = tgt_tip + np.array([0.0, 0.0, self.clearance])
            if _at(tip, above, r_now, r_tgt) and abs(g.opening - tgt.opening) < 1e-12:
                self.phase = "descend"
            else:
                finger = tgt.opening - g.opening
                return move_action(tip, above, r_now, r_tgt, finger)
        if self.phase == "descend":
            if _at(tip, tgt_tip):
                self.phase = "close"
            else:
                return move_action(tip, tgt_tip)
        if self.phase == "close":
            self.phase = "closing"
            return Action(finger=-g.opening)
        if self.phase == "closing":
            if not state.attached:
                raise PolicyFailure("grasp: not attached")
            self.phase = "lift"
            self.lift_to = tip + (goal.center.position - state.object_pose.position)
        if self.phase == "lift":
            if not state.attached:
                raise PolicyFailure("grasp: dropped")
            if _at(tip, self.lift_to):
                return ZERO_ACTION
            return move_action(tip, self.lift_to)
        raise PolicyFailure(f"grasp: unknown phase {self.phase}")


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class PrimitiveSpec:
    kind: object
    factory: object
    contact: ContactConfig


_REGISTRY: dict = {}


def register_primitive(kind, factory, contact: ContactConfig) -> None:
    """Add or replace a primitive: ``factory()`` must return a fresh policy."""
    _REGISTRY[kind] = PrimitiveSpec(kind, factory, contact)
    _REQUIRED[kind] = contact


def make_policy(kind):
    return _REGISTRY[kind].factory()


def registered_kinds() -> list:
    return list(_REGISTRY)


register_primitive(PrimitiveKind.PUSH, PushPolicy, _REQUIRED[PrimitiveKind.PUSH])
register_primitive(PrimitiveKind.PULL, PullPolicy, _REQUIRED[PrimitiveKind.PULL])
register_primitive(PrimitiveKind.PIVOT, PivotPolicy, _REQUIRED[PrimitiveKind.PIVOT])
register_primitive(PrimitiveKind.GRASP, GraspPolicy, _REQUIRED[PrimitiveKind.GRASP])


def push_policy(state, goal, scene, obj) -> Action:
    """Stateless entry point: one push decision from a fresh controller."""
    return PushPolicy()(state, goal, scene, obj)


def pull_policy(state, goal, scene, obj) -> Action:
    return PullPolicy()(state, goal, scene, obj)


def pivot_policy(state, goal, scene, obj) -> Action:
    return PivotPolicy()(state, goal, scene, obj)


def grasp_policy(state, goal, scene, obj) -> Action:
    return GraspPolicy()(state, goal, scene, obj)
