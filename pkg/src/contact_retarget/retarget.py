"""Demonstrations and contact retargeting of their switch poses.

A demo is a keyframed object trajectory labelled with the primitive used on
each segment.  Its contact-switch poses are carried into a new scene by
chaining the demo's relative transforms from the new start pose, then each
guess is projected onto the contact requirements of the two primitives that
meet there.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contact import (
    ANTIPODAL_HALF_ANGLE,
    RUNTIME_TOL,
    SOLVER_TOL,
    ContactConfig,
    EnvContact,
    GripperConfig,
    RobotContact,
    antipodal_ok,
    down_rotation,
    far_top_edge_point,
    grasp_config,
    gripper_at_tip,
    is_freestanding,
    satisfies_env,
    snap_freestanding,
    support_axis,
    top_contact,
)
from .errors import Infeasible, SchemaError, Unreachable
from .geometry import (
    Pose,
    _separation,
    box_angle_distance,
    compose,
    corners,
    corners_rt,
    point_box_signed_distance,
    position_distance,
    relative_transform,
    rotvec_to_matrix,
    signed_distance_point_plane,
)
from .primitives import PrimitiveKind, required_contact
from .scene import GripperModel, ObjectModel, Scene, load_json, scene_from_dict, scene_to_dict, wall_plane
from .solver import ConstraintSystem, SolverConfig, position_objective, solve_feasible, solve_pose

DEFAULT_POS_RADIUS = 0.01
DEFAULT_ANG_RADIUS = math.radians(5.0)
STANDOFF_HEIGHT = 0.05


# ---------------------------------------------------------------------------
# demos

@dataclass(frozen=True)
class Keyframe:
    t: float
    pose: Pose


@dataclass(frozen=True)
class Demo:
    scene: Scene
    object: ObjectModel
    keyframes: tuple[Keyframe, ...]
    labels: tuple[PrimitiveKind, ...]
    switch_indices: tuple[int, ...]
    final_goal_pose: Pose

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        object.__setattr__(self, "labels", tuple(PrimitiveKind(k) for k in self.labels))
        object.__setattr__(self, "switch_indices", tuple(int(i) for i in self.switch_indices))
        if not self.keyframes:
            raise SchemaError("demo needs at least one keyframe")
        if len(self.labels) != len(self.switch_indices) + 1:
            raise SchemaError(
                f"{len(self.labels)} labels need {len(self.labels) - 1} switch indices, "
                f"got {len(self.switch_indices)}")
        prev = 0
        for i in self.switch_indices:
            if not prev < i < len(self.keyframes):
                raise SchemaError(f"switch indices must increase within (0, {len(self.keyframes)}): {i}")
            prev = i
        ts = [k.t for k in self.keyframes]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise SchemaError("keyframe times must be non-decreasing")

    @property
    def n_primitives(self) -> int:
        return len(self.labels)

    def switch_poses(self) -> list[Pose]:
        return [self.keyframes[i].pose for i in self.switch_indices]

    def anchor_poses(self) -> list[Pose]:
        """Start pose, every switch pose, then the final goal pose."""
        return [self.keyframes[0].pose, *self.switch_poses(), self.final_goal_pose]

    def contact_pair(self, i: int) -> tuple[ContactConfig, ContactConfig]:
        """Requirements of the primitives on either side of switch ``i`` (1-based)."""
        return required_contact(self.labels[i - 1]), required_contact(self.labels[i])


def _pose_to_dict(p: Pose) -> dict:
    return {"position": [float(v) for v in p.position], "quaternion": [float(v) for v in p.quaternion]}


def _pose_from_dict(d, where: str) -> Pose:
    if not isinstance(d, dict) or set(d) - {"position", "quaternion", "t"} or "position" not in d:
        raise SchemaError(f"{where}: expected {{position, quaternion}}")
    try:
        pos = [float(v) for v in d["position"]]
        quat = [float(v) for v in d.get("quaternion", [1.0, 0.0, 0.0, 0.0])]
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None
    if len(pos) != 3 or len(quat) != 4:
        raise SchemaError(f"{where}: position needs 3 values and quaternion 4")
    try:
        return Pose(pos, quat)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


_DEMO_KEYS = {"scene", "object", "keyframes", "labels", "switch_indices", "final_goal"}


def demo_to_dict(demo: Demo) -> dict:
    return {
        "scene": scene_to_dict(demo.scene),
        "object": {"name": demo.object.name, "half_extents": demo.object.half_extents.tolist()},
        "keyframes": [{"t": k.t, **_pose_to_dict(k.pose)} for k in demo.keyframes],
        "labels": [k.value for k in demo.labels],
        "switch_indices": list(demo.switch_indices),
        "final_goal": _pose_to_dict(demo.final_goal_pose),
    }


def object_from_dict(d, where: str = "object") -> ObjectModel:
    if not isinstance(d, dict) or set(d) - {"name", "half_extents"} or "half_extents" not in d:
        raise SchemaError(f"{where}: expected {{name, half_extents}}")
    try:
        return ObjectModel.from_half_extents(str(d.get("name", "object")), [float(v) for v in d["half_extents"]])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def demo_from_dict(d) -> Demo:
    if not isinstance(d, dict):
        raise SchemaError("demo: expected an object")
    unknown = set(d) - _DEMO_KEYS
    missing = _DEMO_KEYS - set(d)
    if unknown or missing:
        raise SchemaError(f"demo: unknown keys {sorted(unknown)}, missing keys {sorted(missing)}")
    if not isinstance(d["keyframes"], list):
        raise SchemaError("demo.keyframes: expected a list")
    keyframes = []
    for k, kd in enumerate(d["keyframes"]):
        pose = _pose_from_dict(kd, f"keyframes[{k}]")
        keyframes.append(Keyframe(float(kd.get("t", k)), pose))
    try:
        labels = tuple(PrimitiveKind(v) for v in d["labels"])
        switches = tuple(int(v) for v in d["switch_indices"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"demo labels/switch_indices: {exc}") from None
    return Demo(scene_from_dict(d["scene"]), object_from_dict(d["object"]), tuple(keyframes), labels,
                switches, _pose_from_dict(d["final_goal"], "final_goal"))


def load_demo(path) -> Demo:
    return demo_from_dict(load_json(path))


def save_demo(demo: Demo, path) -> None:
    Path(path).write_text(json.dumps(demo_to_dict(demo), indent=2))


# ---------------------------------------------------------------------------
# goal regions

@dataclass(frozen=True)
class GoalRegion:
    """Ball around ``center``; optionally also bound to contact requirements.

    ``contacts`` and ``freestanding`` make membership demand the contacts the
    centre was solved for, at the runtime tolerance.
    """

    center: Pose
    pos_radius: float = DEFAULT_POS_RADIUS
    ang_radius: float = DEFAULT_ANG_RADIUS
    contacts: frozenset = frozenset()
    freestanding: bool = False

    def __post_init__(self):
        if not (self.pos_radius > 0 and self.ang_radius > 0):
            raise ValueError("goal radii must be positive")
        object.__setattr__(self, "contacts", frozenset(EnvContact(c) for c in self.contacts))

    def in_ball(self, x: Pose) -> bool:
        return (position_distance(x, self.center) <= self.pos_radius
                and box_angle_distance(x, self.center) <= self.ang_radius)

    def contains(self, x: Pose, obj: ObjectModel, scene: Scene, tol: float = RUNTIME_TOL) -> bool:
        if not self.in_ball(x):
            return False
        if self.contacts and not satisfies_env(x, self.contacts, scene, obj, tol):
            return False
        return not self.freestanding or is_freestanding(x, obj, scene, tol)

    def to_dict(self) -> dict:
        return {**_pose_to_dict(self.center), "pos_radius": self.pos_radius,
                "ang_radius_deg": math.degrees(self.ang_radius),
                "contacts": sorted(c.value for c in self.contacts), "freestanding": self.freestanding}

    @classmethod
    def from_dict(cls, d) -> "GoalRegion":
        if not isinstance(d, dict):
            raise SchemaError("goal: expected an object")
        allowed = {"position", "quaternion", "pos_radius", "ang_radius_deg", "contacts", "freestanding"}
        if set(d) - allowed:
            raise SchemaError(f"goal: unknown keys {sorted(set(d) - allowed)}")
        center = _pose_from_dict({k: d[k] for k in ("position", "quaternion") if k in d}, "goal")
        try:
            return cls(center, float(d.get("pos_radius", DEFAULT_POS_RADIUS)),
                       math.radians(float(d.get("ang_radius_deg", math.degrees(DEFAULT_ANG_RADIUS)))),
                       frozenset(EnvContact(c) for c in d.get("contacts", [])), bool(d.get("freestanding", False)))
        except ValueError as exc:
            raise SchemaError(f"goal: {exc}") from None


@dataclass(frozen=True)
class GoalSequence:
    goals: tuple[GoalRegion, ...]
    guesses: tuple[Pose, ...] = ()
    retargeted: bool = True

    def __len__(self):
        return len(self.goals)

    def __getitem__(self, i):
        return self.goals[i]


@dataclass(frozen=True)
class RetargetConfig:
    pos_radius: float = DEFAULT_POS_RADIUS
    ang_radius: float = DEFAULT_ANG_RADIUS
    orientation_weight: float = 0.1
    solver: SolverConfig = SolverConfig()


# ---------------------------------------------------------------------------
# remap / retarget

def remap_x(demo: Demo, x0: Pose) -> list[Pose]:
    """Guesses for every switch and the final goal, chained from ``x0``."""
    anchors = demo.anchor_poses()
    out, cur = [], x0
    for a, b in zip(anchors, anchors[1:]):
        if a != b:
            cur = compose(relative_transform(a, b), cur)
        out.append(cur)
    return out


def _wall_aligned_starts(x: Pose, obj: ObjectModel, scene: Scene) -> list[Pose]:
    """Flat placements touching the wall, one per horizontal face turned to it."""
    wall = scene.require_wall()
    n_in = -wall.normal
    plane = wall_plane(scene)
    k, _ = support_axis(x)
    h = obj.half_extents
    out = []
    for a in (i for i in range(3) if i != k):
        for sign in (1.0, -1.0):
            v = sign * x.rotation[:, a]
            yaw = math.atan2(n_in[1], n_in[0]) - math.atan2(v[1], v[0])
            r = rotvec_to_matrix([0.0, 0.0, yaw]) @ x.rotation
            p = x.position.copy()
            d = float((p - plane.point) @ plane.normal)
            p = p + (float(h[a]) - d) * plane.normal
            out.append(Pose.from_matrix(r, p))
    return out


def _x_constraints(env: frozenset, scene: Scene, obj: ObjectModel, k: int) -> ConstraintSystem:
    h = obj.half_extents
    u, v = (i for i in range(3) if i != k)
    gm = scene.gripper
    cs = ConstraintSystem()

    def flat(p: Pose):
        r = p.rotation
        return [r[2, u] * h[u], r[2, v] * h[v], p.position[2] - np.abs(r[2]) @ h]

    cs.equalities.append(flat)
    if EnvContact.WALL in env:
        wall = scene.require_wall()
        plane = wall_plane(scene)

        memo = [None, None]

        def wall_pts(p: Pose):
            # equality and span residuals are evaluated back to back on one pose
            if memo[0] is p:
                return memo[1]
            pts = corners_rt(h, p.rotation, p.position)
            d = (pts - plane.point) @ plane.normal
            near = np.lexsort((pts[:, 2], d))[:4]
            memo[0], memo[1] = p, (pts, d, np.sort(near[np.lexsort((d[near], pts[near, 2]))[:2]]))
            return memo[1]

        def wall_eq(p: Pose):
            _, d, idx = wall_pts(p)
            return d[idx]

        def wall_span(p: Pose):
            pts, _, idx = wall_pts(p)
            s = (pts[idx] - wall.center) @ wall.tangent
            return 0.5 * wall.length - np.abs(s)

        cs.equalities.append(wall_eq)
        cs.inequalities.append(wall_span)
    for name, box, bpose in scene.blockers():
        if name == "wall" and EnvContact.WALL in env:
            continue
        hb, rb, pb = box.half_extents, bpose.rotation, bpose.position
        cs.inequalities.append(lambda p, hb=hb, rb=rb, pb=pb: _separation(h, p.rotation, p.position, hb, rb, pb))
    lo, hi = gm.workspace_min, gm.workspace_max
    cs.inequalities.append(lambda p: [p.position[0] - lo[0], hi[0] - p.position[0],
                                      p.position[1] - lo[1], hi[1] - p.position[1]])
    return cs


def retarget_x(sigma_i: ContactConfig, sigma_next: ContactConfig, scene: Scene, obj: ObjectModel,
               guess: Pose, cfg: RetargetConfig = RetargetConfig()) -> GoalRegion:
    """Nearest freestanding pose meeting both primitives' environment contacts."""
    env = frozenset(sigma_i.env | sigma_next.env)
    if EnvContact.WALL in env:
        scene.require_wall()
    snapped = snap_freestanding(guess, obj)
    k, _ = support_axis(snapped)
    cs = _x_constraints(env, scene, obj, k)
    starts = [snapped]
    if EnvContact.WALL in env:
        starts += _wall_aligned_starts(snapped, obj, scene)
    center = solve_pose(position_objective(guess, cfg.orientation_weight), cs, guess, cfg.solver, starts)
    tol = max(cfg.solver.tol, SOLVER_TOL)
    if not (satisfies_env(center, env, scene, obj, tol) and is_freestanding(center, obj, scene, tol)):
        raise Infeasible("solution failed the contact recheck")
    return GoalRegion(center, cfg.pos_radius, cfg.ang_radius, env, True)


def standoff_config(x: Pose, obj: ObjectModel, gripper: GripperModel) -> GripperConfig:
    """Closed gripper hovering above the object's top face."""
    pts = corners(obj.box, x)
    top = pts[np.argsort(-pts[:, 2], kind="stable")[:4]].mean(axis=0)
    tip = top + np.array([0.0, 0.0, STANDOFF_HEIGHT])
    k, _ = support_axis(x)
    u = [i for i in range(3) if i != k][0]
    cfg = gripper_at_tip(tip, gripper, down_rotation(x.rotation[:, u]))
    if not gripper.in_workspace(cfg.pose.position):
        raise Unreachable("standoff pose outside workspace")
    return cfg


def antipodal_config(x: Pose, obj: ObjectModel, scene: Scene, cfg: SolverConfig = SolverConfig()) -> GripperConfig:
    """Closed fingertip on the face opposite the wall, inside the contact cone."""
    wall = scene.require_wall()
    gm = scene.gripper
    seed = gripper_at_tip(far_top_edge_point(x, obj, scene), gm, down_rotation(wall.tangent))
    n = wall.normal
    cs = ConstraintSystem()

    def tip(g: GripperConfig):
        return g.pose.position + g.pose.rotation[:, 2] * gm.finger_length

    cs.equalities.append(lambda g: point_box_signed_distance(tip(g), obj.box, x))

    def cone(g: GripperConfig):
        r = tip(g) - x.position
        c = float(r @ n) / max(float(np.linalg.norm(r)), 1e-12)
        return ANTIPODAL_HALF_ANGLE - math.acos(max(-1.0, min(1.0, c)))

    cs.inequalities.append(cone)
    cs.inequalities.append(lambda g: tip(g)[2])
    if cs.violation(seed) > cfg.tol:
        # tall boxes: slide the seed down the far face into the cone
        pts = corners(obj.box, x)
        d = signed_distance_point_plane(pts, wall_plane(scene))
        face = pts[np.argsort(-d, kind="stable")[:4]].mean(axis=0)
        top = far_top_edge_point(x, obj, scene)
        for t in (0.25, 0.5, 0.75, 1.0):
            cand = gripper_at_tip(top + t * (face - top), gm, down_rotation(wall.tangent))
            if cs.violation(cand) <= cfg.tol:
                seed = cand
                break
    g = solve_feasible(cs, seed, cfg)
    if not antipodal_ok(g, x, obj, scene, max(cfg.tol, SOLVER_TOL)):
        raise Infeasible("antipodal contact failed the recheck")
    if not gm.in_workspace(g.pose.position):
        raise Unreachable("antipodal pose outside workspace")
    return g


def retarget_q(x: Pose, sigma_next: ContactConfig, scene: Scene, obj: ObjectModel,
               gripper: GripperModel | None = None, cfg: SolverConfig = SolverConfig()) -> GripperConfig:
    """Gripper configuration that realises the robot contact of ``sigma_next``."""
    gm = scene.gripper if gripper is None else gripper
    robot = sigma_next.robot
    if robot is RobotContact.TOP:
        return top_contact(x, obj, gm)
    if robot is RobotContact.GRASP:
        return grasp_config(x, obj, gm, scene)
    if robot is RobotContact.ANTIPODAL:
        if gripper is not None and gripper != scene.gripper:
            scene = Scene(scene.wall, scene.obstacles, gripper)
        return antipodal_config(x, obj, scene, cfg)
    return standoff_config(x, obj, gm)


def _derived_final(demo: Demo, last_center: Pose, cfg: RetargetConfig) -> GoalRegion:
    anchors = demo.anchor_poses()
    a, b = anchors[-2], anchors[-1]
    center = last_center if a == b else compose(relative_transform(a, b), last_center)
    return GoalRegion(center, cfg.pos_radius, cfg.ang_radius)


def build_goal_sequence(demo: Demo, scene: Scene, obj: ObjectModel, x0: Pose,
                        final_goal: GoalRegion | None = None, cfg: RetargetConfig = RetargetConfig(),
                        retarget: bool = True) -> GoalSequence:
    """Goal regions for every primitive; ``retarget=False`` keeps raw guesses."""
    guesses = remap_x(demo, x0)
    goals = []
    for i in range(1, demo.n_primitives):
        guess = guesses[i - 1]
        s_prev, s_next = demo.contact_pair(i)
        if not retarget:
            # same membership test as a retargeted goal, but the raw centre
            goals.append(GoalRegion(guess, cfg.pos_radius, cfg.ang_radius, s_prev.env | s_next.env, True))
            continue
        try:
            g = retarget_x(s_prev, s_next, scene, obj, guess, cfg)
        except Infeasible as exc:
            raise Infeasible(f"switch {i}: {exc}", index=i) from None
        goals.append(g)
    if final_goal is None:
        final_goal = _derived_final(demo, goals[-1].center if goals else x0, cfg)
    goals.append(final_goal)
    return GoalSequence(tuple(goals), tuple(guesses), retarget)


__all__ = [
    "Demo",
    "GoalRegion",
    "GoalSequence",
    "Keyframe",
    "RetargetConfig",
    "antipodal_config",
    "build_goal_sequence",
    "demo_from_dict",
    "demo_to_dict",
    "load_demo",
    "object_from_dict",
    "remap_x",
    "retarget_q",
    "retarget_x",
    "save_demo",
    "standoff_config",
]
