"""Semantic contact requirements and their geometric realisation.

Environment requirements (ground, wall) are residuals on the object pose;
robot requirements (top, antipodal, grasp) place the gripper given an
object pose.  The gripper frame has ``z`` along the approach direction and
``y`` along the finger-opening axis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NoClearance, TooWide, Unreachable
from .geometry import (
    Pose,
    box_separation,
    corners,
    point_box_signed_distance,
    rotvec_to_matrix,
    signed_distance_point_plane,
)
from .scene import GripperModel, ObjectModel, Scene, wall_plane

SOLVER_TOL = 1e-6
RUNTIME_TOL = 1e-3
ANTIPODAL_HALF_ANGLE = math.pi / 6
GRASP_MARGIN = 0.004
FREESTANDING_TILT = math.radians(2.0)


class EnvContact(enum.Enum):
    GROUND = "ground"
    WALL = "wall"


class RobotContact(enum.Enum):
    NONE = "none"
    TOP = "top"
    ANTIPODAL = "antipodal"
    GRASP = "grasp"


@dataclass(frozen=True)
class ContactConfig:
    env: frozenset
    robot: RobotContact

    def __post_init__(self):
        object.__setattr__(self, "env", frozenset(self.env))


@dataclass(frozen=True, eq=False)
class GripperConfig:
    pose: Pose
    opening: float = 0.0

    def fingertips(self, model: GripperModel) -> np.ndarray:
        local = np.array([[0.0, -0.5 * self.opening, model.finger_length],
                          [0.0, 0.5 * self.opening, model.finger_length]])
        return self.pose.transform_points(local)

    def tip_center(self, model: GripperModel) -> np.ndarray:
        return self.pose.transform_points(np.array([[0.0, 0.0, model.finger_length]]))[0]

    def __eq__(self, other):
        return isinstance(other, GripperConfig) and self.pose == other.pose and self.opening == other.opening

    def __hash__(self):
        return hash((self.pose, self.opening))


def down_rotation(finger_axis=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Gripper rotation with approach ``-z`` and the given horizontal finger axis."""
    y = np.asarray(finger_axis, dtype=float).copy()
    y[2] = 0.0
    n = float(np.linalg.norm(y))
    y = y / n if n > 1e-9 else np.array([0.0, 1.0, 0.0])
    z = np.array([0.0, 0.0, -1.0])
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def gripper_at_tip(tip, model: GripperModel, rotation=None, opening: float = 0.0) -> GripperConfig:
    """Gripper whose fingertip midpoint sits at ``tip``."""
    r = down_rotation() if rotation is None else np.asarray(rotation, dtype=float)
    pos = np.asarray(tip, dtype=float) - r @ np.array([0.0, 0.0, model.finger_length])
    return GripperConfig(Pose.from_matrix(r, pos), opening)


# ---------------------------------------------------------------------------
# environment residuals

def ground_residual(x: Pose, obj: ObjectModel) -> float:
    return float(corners(obj.box, x)[:, 2].min())


def _wall_edge_indices(pts: np.ndarray, dist: np.ndarray) -> np.ndarray:
    near = np.lexsort((pts[:, 2], dist))[:4]
    # body-fixed order keeps the residual vector continuous under ties
    return np.sort(near[np.lexsort((dist[near], pts[near, 2]))[:2]])


def wall_contact_points(x: Pose, obj: ObjectModel, scene: Scene) -> np.ndarray:
    """The two lowest of the four vertices nearest the wall, shape ``(2, 3)``."""
    plane = wall_plane(scene)
    pts = corners(obj.box, x)
    dist = signed_distance_point_plane(pts, plane)
    return pts[_wall_edge_indices(pts, dist)]


def wall_residual(x: Pose, obj: ObjectModel, scene: Scene) -> np.ndarray:
    plane = wall_plane(scene)
    pts = corners(obj.box, x)
    dist = signed_distance_point_plane(pts, plane)
    return dist[_wall_edge_indices(pts, dist)]


def _on_wall_span(points, scene: Scene, tol: float) -> bool:
    wall = scene.wall
    s = (np.asarray(points) - wall.center) @ wall.tangent
    # the wall is a plane bounded along its length only
    return bool(np.all(np.abs(s) <= 0.5 * wall.length + tol))


def penetration(x: Pose, obj: ObjectModel, scene: Scene) -> float:
    """Deepest penetration into ground, wall or obstacles (0 when clear)."""
    depth = max(0.0, -ground_residual(x, obj))
    for _, box, pose in scene.blockers():
        depth = max(depth, -box_separation(obj.box, x, box, pose))
    return depth


def satisfies_env(x: Pose, sigma_x, scene: Scene, obj: ObjectModel, tol: float = RUNTIME_TOL) -> bool:
    sigma_x = frozenset(sigma_x)
    if not sigma_x:
        return True
    if EnvContact.GROUND in sigma_x and abs(ground_residual(x, obj)) > tol:
        return False
    if EnvContact.WALL in sigma_x:
        if scene.wall is None:
            return False
        if np.max(np.abs(wall_residual(x, obj, scene))) > tol:
            return False
        if not _on_wall_span(wall_contact_points(x, obj, scene), scene, tol):
            return False
    return penetration(x, obj, scene) <= tol


def unmet_env(x: Pose, sigma_x, scene: Scene, obj: ObjectModel, tol: float = RUNTIME_TOL) -> str | None:
    """Name of the first environment requirement ``x`` fails, or None."""
    sigma_x = frozenset(sigma_x)
    if not sigma_x:
        return None
    if EnvContact.WALL in sigma_x and not satisfies_env(x, {EnvContact.WALL}, scene, obj, tol):
        return "wall"
    if EnvContact.GROUND in sigma_x and abs(ground_residual(x, obj)) > tol:
        return "ground"
    if penetration(x, obj, scene) > tol:
        for name, box, pose in scene.blockers():
            if -box_separation(obj.box, x, box, pose) > tol:
                return name
        return "ground"
    return None


# ---------------------------------------------------------------------------
# freestanding states

def support_axis(x: Pose) -> tuple[int, float]:
    """Body axis closest to vertical and the sign that points it up."""
    col = x.rotation[2]
    k = int(np.argmax(np.abs(col)))
    return k, float(np.sign(col[k]) or 1.0)


def is_freestanding(x: Pose, obj: ObjectModel, scene: Scene, tol: float = RUNTIME_TOL) -> bool:
    if abs(ground_residual(x, obj)) > tol:
        return False
    k, _ = support_axis(x)
    if math.acos(min(1.0, abs(float(x.rotation[2, k])))) > FREESTANDING_TILT:
        return False
    if penetration(x, obj, scene) > tol:
        return False
    # centroid must project inside the support face with a 1 mm margin
    pts = corners(obj.box, x)
    low = pts[np.argsort(pts[:, 2], kind="stable")[:4]]
    h = obj.half_extents
    u, v = [i for i in range(3) if i != k]
    for axis, half in ((u, h[u]), (v, h[v])):
        a = x.rotation[:, axis].copy()
        a[2] = 0.0
        a /= np.linalg.norm(a)
        proj = (low[:, :2] - x.position[:2]) @ a[:2]
        if proj.min() > -0.001 or proj.max() < 0.001:
            return False
    return True


def snap_freestanding(x: Pose, obj: ObjectModel) -> Pose:
    """Nearest face-down placement: minimal tilt correction, resting on ground."""
    k, s = support_axis(x)
    v = s * x.rotation[:, k]
    axis = np.cross(v, [0.0, 0.0, 1.0])
    sn = float(np.linalg.norm(axis))
    r = x.rotation
    if sn > 1e-15:
        angle = math.atan2(sn, float(v[2]))
        r = rotvec_to_matrix(axis / sn * angle) @ r
    p = x.position.copy()
    p[2] = float(obj.half_extents[k])
    return Pose.from_matrix(r, p)


# ---------------------------------------------------------------------------
# robot contacts

def top_contact(x: Pose, obj: ObjectModel, gripper: GripperModel) -> GripperConfig:
    """Closed fingers pressing the centre of the object's highest face."""
    pts = corners(obj.box, x)
    top = pts[np.argsort(-pts[:, 2], kind="stable")[:4]].mean(axis=0)
    k, _ = support_axis(x)
    # finger axis along a horizontal body axis keeps the pose unique
    u = [i for i in range(3) if i != k][0]
    cfg = gripper_at_tip(top, gripper, down_rotation(x.rotation[:, u]))
    if not (gripper.in_workspace(cfg.pose.position) and gripper.in_workspace(top)):
        raise Unreachable(f"top contact {top.round(4).tolist()} outside workspace")
    return cfg


def antipodal_residuals(g: GripperConfig, x: Pose, obj: ObjectModel, scene: Scene) -> tuple[float, float]:
    """Fingertip gap to the object surface and angle from the wall-normal cone axis."""
    plane = wall_plane(scene)
    dist, ang = 0.0, 0.0
    for tip in g.fingertips(scene.gripper):
        dist = max(dist, abs(point_box_signed_distance(tip, obj.box, x)))
        r = tip - x.position
        nr = float(np.linalg.norm(r))
        if nr < 1e-12:
            ang = max(ang, math.pi)
            continue
        c = float(r @ plane.normal) / nr
        ang = max(ang, math.acos(max(-1.0, min(1.0, c))))
    return dist, ang


def antipodal_ok(g: GripperConfig, x: Pose, obj: ObjectModel, scene: Scene, tol: float = SOLVER_TOL) -> bool:
    d, a = antipodal_residuals(g, x, obj, scene)
    return d <= tol and a <= ANTIPODAL_HALF_ANGLE + 1e-9


def far_top_edge_point(x: Pose, obj: ObjectModel, scene: Scene) -> np.ndarray:
    """Midpoint of the highest edge on the face farthest from the wall."""
    plane = wall_plane(scene)
    pts = corners(obj.box, x)
    d = signed_distance_point_plane(pts, plane)
    far = np.lexsort((-pts[:, 2], -d))[:4]
    return pts[far[np.lexsort((d[far], -pts[far, 2]))[:2]]].mean(axis=0)


def grasp_config(x: Pose, obj: ObjectModel, gripper: GripperModel, scene: Scene) -> GripperConfig:
    """Top-down grasp across the thinnest horizontal dimension.

    Raises TooWide when nothing fits in the hand and NoClearance when a finger
    would have to pass between the wall and the object without room to do so.
    """
    k, _ = support_axis(x)
    h = obj.half_extents
    horiz = [i for i in range(3) if i != k]
    thin = min(horiz, key=lambda i: (h[i], i))
    wide = [i for i in horiz if i != thin][0]
    thickness = 2.0 * float(h[thin])
    if thickness > gripper.max_opening - 0.002:
        raise TooWide(f"thinnest horizontal thickness {thickness:.4f} m exceeds hand")
    opening = min(thickness + GRASP_MARGIN, gripper.max_opening)
    height = 2.0 * float(h[k])
    depth = min(gripper.grasp_depth, 0.5 * height)
    top_z = float(corners(obj.box, x)[:, 2].max())
    finger_axis = x.rotation[:, thin].copy()
    wide_axis = x.rotation[:, wide].copy()
    center = x.position.copy()
    tip_z = top_z - depth

    wall = scene.wall
    if wall is not None:
        n = wall.normal
        along_wide = float(wide_axis @ n)
        if abs(along_wide) > math.cos(math.radians(45)):
            # straddle the edge farthest from the wall
            inset = max(gripper.finger_thickness, 0.5 * gripper.finger_thickness + 0.005)
            offset = max(float(h[wide]) - inset, 0.0)
            center = center + np.sign(along_wide) * offset * wide_axis
        elif abs(float(finger_axis @ n)) > math.cos(math.radians(45)):
            gap = float(np.min(signed_distance_point_plane(corners(obj.box, x), wall_plane(scene))))
            s = float((x.position - wall.center) @ wall.tangent)
            beside_wall = abs(s) <= 0.5 * wall.length + float(h[wide])
            if beside_wall and tip_z < wall.height and gap < gripper.finger_thickness:
                raise NoClearance(
                    f"wall gap {gap:.4f} m < finger thickness {gripper.finger_thickness:.4f} m")
    tip = np.array([center[0], center[1], tip_z])
    cfg = gripper_at_tip(tip, gripper, down_rotation(finger_axis), opening)
    if not (gripper.in_workspace(cfg.pose.position) and gripper.in_workspace(tip)):
        raise Unreachable("grasp pose outside workspace")
    return cfg


def wall_gap(x: Pose, obj: ObjectModel, scene: Scene) -> float:
    """Smallest distance between the object and the wall contact plane."""
    return float(np.min(signed_distance_point_plane(corners(obj.box, x), wall_plane(scene))))


# ---------------------------------------------------------------------------
# pivoting against the wall

def pivot_axis(scene: Scene) -> np.ndarray:
    """Horizontal wall tangent oriented so positive turns lift the near end."""
    n_in = -scene.require_wall().normal
    k = np.cross(n_in, [0.0, 0.0, 1.0])
    return k / np.linalg.norm(k)


def pivot_pose(x: Pose, obj: ObjectModel, scene: Scene, angle: float, slide: float = 0.0) -> Pose:
    """Turn about the wall tangent, then slide back onto the wall and ground."""
    wall = scene.require_wall()
    r = rotvec_to_matrix(pivot_axis(scene) * angle) @ x.rotation
    p = x.position.copy()
    pts = corners(obj.box, Pose.from_matrix(r, p))
    d = signed_distance_point_plane(pts, wall_plane(scene))
    p = p - float(d.min()) * wall.normal
    p[2] -= float(pts[:, 2].min())
    p = p + slide * wall.tangent
    return Pose.from_matrix(r, p)
