"""Deterministic quasi-static world model.

Object motion is decided by contact mode for each step:

* attached: the object moves rigidly with the gripper;
* finger contact and a planar action: sticky planar motion about the tip;
* finger contact, object on the wall and a tilting action: the object turns
  about the horizontal wall tangent while its near-lower edge slides on the
  wall and its lowest edge stays on the ground; the fingertip follows a
  body-fixed point (compliance);
* otherwise the object does not move.

Motions that would make bodies interpenetrate are clipped by bisection on
the fraction of the action applied.  An object left unsupported and not
freestanding settles onto the nearest face-down placement.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .contact import (
    RUNTIME_TOL,
    GripperConfig,
    ground_residual,
    is_freestanding,
    penetration,
    pivot_axis,
    pivot_pose,
    support_axis,
)
from .errors import ParseError, PolicyFailure, SchemaError, Unreachable, WorkspaceViolation
from .geometry import Pose, corners, point_box_signed_distance, rotvec_to_matrix, signed_distance_point_plane
from .primitives import Action
from .scene import ObjectModel, Scene, wall_plane

SAFE_HEIGHT = 0.4
PENETRATION_EPS = 1e-7
BLOCKED_STEPS = 3
BISECTION_ITERS = 40

FAILURE_EVENTS = ("grasp: single-face contact", "grasp: missed")


@dataclass(frozen=True)
class ContactFlags:
    object_ground: bool = False
    object_wall: bool = False
    finger_object_top: bool = False
    finger_object_side: bool = False

    @property
    def finger_contact(self) -> bool:
        return self.finger_object_top or self.finger_object_side


@dataclass(frozen=True, eq=False)
class SimState:
    object_pose: Pose
    gripper: GripperConfig
    attached: bool = False
    flags: ContactFlags = ContactFlags()

    def __eq__(self, other):
        return (isinstance(other, SimState) and self.object_pose == other.object_pose
                and self.gripper == other.gripper and self.attached == other.attached
                and self.flags == other.flags)

    def __hash__(self):
        return hash((self.object_pose, self.gripper, self.attached, self.flags))


@dataclass(frozen=True)
class StepResult:
    state: SimState
    fraction: float
    mode: str
    events: tuple[str, ...] = ()


@dataclass(frozen=True)
class Outcome:
    kind: str  # "reached", "timeout" or "failure"
    reason: str | None = None

    @property
    def reached(self) -> bool:
        return self.kind == "reached"


@dataclass
class Trajectory:
    states: list[SimState] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)
    outcome: Outcome = Outcome("timeout")


# ---------------------------------------------------------------------------
# contact bookkeeping

def tip_center(g: GripperConfig, scene: Scene) -> np.ndarray:
    return g.pose.position + g.pose.rotation[:, 2] * scene.gripper.finger_length


def _tip_face(tip: np.ndarray, x: Pose, obj: ObjectModel) -> str:
    local = x.rotation.T @ (tip - x.position)
    h = obj.half_extents
    i = int(np.argmax(np.abs(local) - h))
    k, s = support_axis(x)
    return "top" if i == k and s * local[i] > 0 else "side"


def compute_flags(x: Pose, g: GripperConfig, scene: Scene, obj: ObjectModel,
                  tol: float = RUNTIME_TOL) -> ContactFlags:
    top = side = False
    for tip in g.fingertips(scene.gripper):
        if abs(point_box_signed_distance(tip, obj.box, x)) <= tol:
            if _tip_face(tip, x, obj) == "top":
                top = True
            else:
                side = True
    wall = False
    if scene.wall is not None:
        pts = corners(obj.box, x)
        d = signed_distance_point_plane(pts, wall_plane(scene))
        touching = pts[np.abs(d) <= tol]
        if touching.size:
            s = (touching - scene.wall.center) @ scene.wall.tangent
            wall = bool(np.any(np.abs(s) <= 0.5 * scene.wall.length + tol))
    return ContactFlags(abs(ground_residual(x, obj)) <= tol, wall, top, side)


def make_state(x: Pose, g: GripperConfig, scene: Scene, obj: ObjectModel, attached: bool = False) -> SimState:
    return SimState(x, g, attached, compute_flags(x, g, scene, obj))


# ---------------------------------------------------------------------------
# kinematics

def _move_gripper(g: GripperConfig, t, w, scene: Scene, d_open: float = 0.0) -> GripperConfig:
    """Translate the fingertip midpoint by ``t`` and turn the hand about it by ``w``."""
    length = scene.gripper.finger_length
    c = g.pose.position + g.pose.rotation[:, 2] * length
    r = rotvec_to_matrix(w) @ g.pose.rotation if np.any(w) else g.pose.rotation
    c2 = c + t
    pos = c2 - r[:, 2] * length
    opening = min(max(g.opening + d_open, 0.0), scene.gripper.max_opening)
    if r is g.pose.rotation:
        return GripperConfig(Pose(pos, g.pose.quaternion), opening)
    return GripperConfig(Pose.from_matrix(r, pos), opening)


def _rigid_about(x: Pose, c, t, w) -> Pose:
    if not np.any(w):
        return Pose(x.position + t, x.quaternion)
    rw = rotvec_to_matrix(w)
    return Pose.from_matrix(rw @ x.rotation, c + t + rw @ (x.position - c))


def _is_planar(a: Action) -> bool:
    return a.translation[2] == 0.0 and a.rotation[0] == 0.0 and a.rotation[1] == 0.0


def _mode(state: SimState, action: Action, scene: Scene) -> str:
    if state.attached:
        return "attached"
    if state.flags.finger_contact:
        if _is_planar(action) and (action.translation.any() or action.rotation.any()):
            return "sticky"
        if (state.flags.object_wall and scene.wall is not None
                and abs(float(action.rotation @ pivot_axis(scene))) > 0.0):
            return "pivot"
    return "free"


def _chord(g: GripperConfig, x: Pose, obj: ObjectModel, scene: Scene):
    """Parameter interval where the finger-closing line crosses the object."""
    c = tip_center(g, scene)
    y = g.pose.rotation[:, 1]
    l0 = x.rotation.T @ (c - x.position)
    dl = x.rotation.T @ y
    h = obj.half_extents
    s0, s1 = -math.inf, math.inf
    for i in range(3):
        if abs(dl[i]) < 1e-12:
            if abs(l0[i]) > h[i]:
                return None
            continue
        a, b = (-h[i] - l0[i]) / dl[i], (h[i] - l0[i]) / dl[i]
        s0, s1 = max(s0, min(a, b)), min(s1, max(a, b))
    return (s0, s1) if s0 < s1 else None


def _apply(state: SimState, action: Action, f: float, mode: str, scene: Scene, obj: ObjectModel):
    """Candidate (object pose, gripper, attached, events) for fraction ``f``."""
    x, g = state.object_pose, state.gripper
    t, w = f * action.translation, f * action.rotation
    events = []
    attached = state.attached
    if mode == "pivot":
        k = pivot_axis(scene)
        angle = float(w @ k)
        slide = float(t @ scene.wall.tangent)
        x2 = pivot_pose(x, obj, scene, angle, slide)
        c = tip_center(g, scene)
        c2 = x2.position + x2.rotation @ (x.rotation.T @ (c - x.position))
        g2 = GripperConfig(Pose(g.pose.position + (c2 - c), g.pose.quaternion), g.opening)
        return x2, g2, attached, events
    g2 = _move_gripper(g, t, w, scene)
    if mode in ("attached", "sticky"):
        x2 = _rigid_about(x, tip_center(g, scene), t, w)
    else:
        x2 = x
    d_open = f * action.finger
    if d_open > 0.0:
        g2 = GripperConfig(g2.pose, min(g2.opening + d_open, scene.gripper.max_opening))
        if attached:
            attached = False
            events.append("release")
    elif d_open < 0.0 and not attached:
        g2, attached, ev = _close(g2, d_open, x2, obj, scene)
        events.extend(ev)
    return x2, g2, attached, events


def _close(g: GripperConfig, d_open: float, x: Pose, obj: ObjectModel, scene: Scene):
    target = max(g.opening + d_open, 0.0)
    half = 0.5 * g.opening
    chord = _chord(g, x, obj, scene)
    if chord is None or chord[1] < -half or chord[0] > half:
        g2 = GripperConfig(g.pose, target)
        return g2, False, (["grasp: missed"] if target == 0.0 else [])
    s0, s1 = chord
    if s0 < -half - 1e-12 or s1 > half + 1e-12:
        # the object reaches past a finger: only one face can be squeezed
        return GripperConfig(g.pose, max(target, 2.0 * max(-s0, s1, 0.0))), False, ["grasp: single-face contact"]
    width = s1 - s0
    if target > width:
        return GripperConfig(g.pose, target), False, []
    mid = 0.5 * (s0 + s1)
    pose = Pose(g.pose.position + mid * g.pose.rotation[:, 1], g.pose.quaternion)
    return GripperConfig(pose, width), True, ["attach"]


def _valid(x: Pose, g: GripperConfig, attached: bool, object_moved: bool, scene: Scene, obj: ObjectModel) -> bool:
    if object_moved and penetration(x, obj, scene) > PENETRATION_EPS:
        return False
    blockers = scene.blockers()
    for tip in g.fingertips(scene.gripper):
        if tip[2] < -PENETRATION_EPS:
            return False
        if not attached and point_box_signed_distance(tip, obj.box, x) < -PENETRATION_EPS:
            return False
        for _, box, pose in blockers:
            if point_box_signed_distance(tip, box, pose) < -PENETRATION_EPS:
                return False
    return True


# ---------------------------------------------------------------------------
# settling

def _exit_up(tip: np.ndarray, x: Pose, obj: ObjectModel) -> float:
    """Upward travel that takes a point inside the object out of it."""
    l0 = x.rotation.T @ (tip - x.position)
    dl = x.rotation.T @ np.array([0.0, 0.0, 1.0])
    h = obj.half_extents
    s1 = math.inf
    for i in range(3):
        if abs(dl[i]) > 1e-12:
            s1 = min(s1, max((-h[i] - l0[i]) / dl[i], (h[i] - l0[i]) / dl[i]))
    return max(s1, 0.0) if math.isfinite(s1) else 0.0


def settle_pose(x: Pose, obj: ObjectModel, scene: Scene) -> Pose | None:
    """Face-down placement reached by tipping about the lowest corner.

    Returns None when no placement free of penetration is found.
    """
    k, s = support_axis(x)
    v = s * x.rotation[:, k]
    axis = np.cross(v, [0.0, 0.0, 1.0])
    sn = float(np.linalg.norm(axis))
    pts = corners(obj.box, x)
    pivot = pts[int(np.argmin(pts[:, 2]))]
    r = x.rotation
    p = x.position.copy()
    if sn > 1e-15:
        rot = rotvec_to_matrix(axis / sn * math.atan2(sn, float(v[2])))
        r = rot @ r
        p = pivot + rot @ (p - pivot)
    p[2] = float(obj.half_extents[k])
    cand = Pose.from_matrix(r, p)
    if scene.wall is not None:
        d = signed_distance_point_plane(corners(obj.box, cand), wall_plane(scene))
        if d.min() < 0.0 and penetration(cand, obj, scene) > PENETRATION_EPS:
            cand = Pose(cand.position - float(d.min()) * scene.wall.normal, cand.quaternion)
    if penetration(cand, obj, scene) <= PENETRATION_EPS:
        return cand
    # resting on something higher than the ground: lowest clear height
    lo, hi = float(cand.position[2]), max(float(x.position[2]), float(cand.position[2])) + 0.5
    if penetration(Pose((cand.position[0], cand.position[1], hi), cand.quaternion), obj, scene) > PENETRATION_EPS:
        return None
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if penetration(Pose((cand.position[0], cand.position[1], mid), cand.quaternion), obj, scene) > PENETRATION_EPS:
            lo = mid
        else:
            hi = mid
    return Pose((cand.position[0], cand.position[1], hi), cand.quaternion)


def _settle(x: Pose, g: GripperConfig, scene: Scene, obj: ObjectModel):
    x2 = settle_pose(x, obj, scene)
    if x2 is None:
        return x, g, ["settle blocked"]
    lift = 0.0
    for tip in g.fingertips(scene.gripper):
        if point_box_signed_distance(tip, obj.box, x2) < 0.0:
            lift = max(lift, _exit_up(tip, x2, obj))
    if lift > 0.0:
        g = GripperConfig(Pose(g.pose.position + np.array([0.0, 0.0, lift]), g.pose.quaternion), g.opening)
    return x2, g, ["settle"]


# ---------------------------------------------------------------------------
# stepping

def advance(state: SimState, action: Action, scene: Scene, obj: ObjectModel) -> StepResult:
    """One quasi-static step; also reports the applied fraction and events."""
    mode = _mode(state, action, scene)
    gm = scene.gripper
    x2, g2, att2, ev = _apply(state, action, 1.0, mode, scene, obj)
    if not gm.in_workspace(g2.pose.position):
        raise WorkspaceViolation(f"gripper would leave the workspace at {g2.pose.position.round(4).tolist()}")
    f = 1.0
    if not _valid(x2, g2, att2, x2 is not state.object_pose, scene, obj):
        lo, hi = 0.0, 1.0
        for _ in range(BISECTION_ITERS):
            mid = 0.5 * (lo + hi)
            cand = _apply(state, action, mid, mode, scene, obj)
            if _valid(cand[0], cand[1], cand[2], cand[0] is not state.object_pose, scene, obj):
                lo = mid
            else:
                hi = mid
        f = lo
        x2, g2, att2, ev = _apply(state, action, f, mode, scene, obj) if f > 0.0 else (
            state.object_pose, state.gripper, state.attached, [])
        ev = list(ev) + ["clipped"]
    flags = compute_flags(x2, g2, scene, obj)
    supported = att2 or (flags.finger_contact and flags.object_wall)
    if not supported and not is_freestanding(x2, obj, scene):
        x2, g2, sev = _settle(x2, g2, scene, obj)
        ev = list(ev) + sev
        flags = compute_flags(x2, g2, scene, obj)
    return StepResult(SimState(x2, g2, att2, flags), f, mode, tuple(ev))


def step(state: SimState, action: Action, scene: Scene, obj: ObjectModel) -> SimState:
    return advance(state, action, scene, obj).state


Policy = Callable[[SimState, object, Scene, ObjectModel], Action]


def rollout(policy: Policy, state: SimState, goal, scene: Scene, obj: ObjectModel,
            max_steps: int = 2000) -> Trajectory:
    """Run ``policy`` until the object enters ``goal``, time runs out or it fails."""
    traj = Trajectory(states=[state])
    blocked = 0
    for t in range(max_steps + 1):
        if goal.contains(state.object_pose, obj, scene):
            traj.outcome = Outcome("reached")
            return traj
        if t == max_steps:
            break
        try:
            action = policy(state, goal, scene, obj)
        except PolicyFailure as exc:
            traj.outcome = Outcome("failure", exc.reason)
            return traj
        if not action.within_bounds():
            traj.outcome = Outcome("failure", "action out of bounds")
            return traj
        try:
            res = advance(state, action, scene, obj)
        except WorkspaceViolation:
            traj.outcome = Outcome("failure", "workspace")
            return traj
        state = res.state
        traj.states.append(state)
        traj.actions.append(action)
        traj.events.extend((t, e) for e in res.events)
        bad = [e for e in res.events if e in FAILURE_EVENTS]
        if bad:
            traj.outcome = Outcome("failure", bad[0])
            return traj
        blocked = blocked + 1 if res.fraction < 1.0 else 0
        if blocked >= BLOCKED_STEPS:
            traj.outcome = Outcome("failure", "blocked")
            return traj
    traj.outcome = Outcome("timeout")
    return traj


# ---------------------------------------------------------------------------
# relocation

def _segment_hits_box(a, b, box, pose, margin: float = 1e-6) -> bool:
    """Whether segment ``a -> b`` passes through the interior of a box."""
    l0 = pose.rotation.T @ (np.asarray(a, dtype=float) - pose.position)
    dl = pose.rotation.T @ (np.asarray(b, dtype=float) - np.asarray(a, dtype=float))
    h = box.half_extents - margin
    s0, s1 = 0.0, 1.0
    for i in range(3):
        if abs(dl[i]) < 1e-15:
            if abs(l0[i]) >= h[i]:
                return False
            continue
        u, v = (-h[i] - l0[i]) / dl[i], (h[i] - l0[i]) / dl[i]
        s0, s1 = max(s0, min(u, v)), min(s1, max(u, v))
        if s0 >= s1:
            return False
    return True


def move_robot_to(state: SimState, target: GripperConfig, scene: Scene, obj: ObjectModel,
                  safe_height: float = SAFE_HEIGHT) -> SimState:
    """Lift to ``safe_height``, travel, descend onto ``target``; the object stays put."""
    gm = scene.gripper
    if not gm.in_workspace(target.pose.position):
        raise Unreachable("relocation target outside the workspace")
    tips = target.fingertips(gm)
    if float(tips[:, 2].min()) < -PENETRATION_EPS or float(target.pose.position[2]) < 0.0:
        raise Unreachable("relocation target below the ground")
    start_xy = state.gripper.pose.position[:2]
    end_xy = target.pose.position[:2]
    tip_drop = gm.finger_length
    bodies = [(name, box, pose) for name, box, pose in scene.blockers()]
    for name, box, pose in bodies:
        top = float(corners(box, pose)[:, 2].max())
        if top >= safe_height - tip_drop:
            a = np.array([*start_xy, 0.5 * top])
            b = np.array([*end_xy, 0.5 * top])
            if _segment_hits_box(a, b, box, pose, 0.0):
                raise Unreachable(f"{name} is taller than the relocation height")
    bodies.append(("object", obj.box, state.object_pose))
    for tip in tips:
        above = np.array([tip[0], tip[1], safe_height - tip_drop])
        for name, box, pose in bodies:
            if _segment_hits_box(above, tip, box, pose):
                raise Unreachable(f"descent blocked by {name}")
    return make_state(state.object_pose, target, scene, obj)


# ---------------------------------------------------------------------------
# serialisation (one state per JSON line; floats use the shortest repr)

def state_to_dict(s: SimState) -> dict:
    f = s.flags
    return {
        "object": {"position": s.object_pose.position.tolist(), "quaternion": s.object_pose.quaternion.tolist()},
        "gripper": {"position": s.gripper.pose.position.tolist(), "quaternion": s.gripper.pose.quaternion.tolist(),
                    "opening": float(s.gripper.opening)},
        "attached": bool(s.attached),
        "flags": {"object_ground": bool(f.object_ground), "object_wall": bool(f.object_wall),
                  "finger_object_top": bool(f.finger_object_top),
                  "finger_object_side": bool(f.finger_object_side)},
    }


def _raw_pose(d) -> Pose:
    # rebuild without renormalising so stored values round-trip bit-exactly
    p = object.__new__(Pose)
    pos = np.array(d["position"], dtype=float).reshape(3)
    quat = np.array(d["quaternion"], dtype=float).reshape(4)
    if abs(float(quat @ quat) - 1.0) > 1e-9:
        raise SchemaError("quaternion is not unit length")
    pos.setflags(write=False)
    quat.setflags(write=False)
    object.__setattr__(p, "position", pos)
    object.__setattr__(p, "quaternion", quat)
    return p


def state_from_dict(d) -> SimState:
    try:
        g = d["gripper"]
        return SimState(_raw_pose(d["object"]), GripperConfig(_raw_pose(g), float(g["opening"])),
                        bool(d["attached"]), ContactFlags(**d["flags"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad state record: {exc}") from None


def save_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def load_jsonl(path) -> list[dict]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from None
    return out


def save_trajectory(traj: Trajectory, path) -> None:
    save_jsonl(path, (state_to_dict(s) for s in traj.states))


def load_states(path) -> list[SimState]:
    """States of a trajectory file; a leading ``{"header": ...}`` record is skipped."""
    return [state_from_dict(r) for r in load_jsonl(path) if "header" not in r]
