"""Environment and body models, plus the JSON scene format.

World frame: the robot sits near the origin, ``z`` is up, the ground is the
plane ``z = 0``.  A wall is described by the world ``x`` of its centre and
its yaw about ``z`` (0 deg means the wall runs parallel to ``y``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidScene, MissingWall, ParseError, SchemaError
from .geometry import Cuboid, Plane, Pose, box_separation

WALL_SLAB_THICKNESS = 0.01
GROUND = Plane((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class Wall:
    center_x: float
    yaw_deg: float = 0.0
    height: float = 0.10
    length: float = 1.015

    def __post_init__(self):
        if not (self.height > 0 and self.length > 0):
            raise InvalidScene(f"wall height/length must be positive: {self}")

    @property
    def yaw(self) -> float:
        return math.radians(self.yaw_deg)

    @property
    def normal(self) -> np.ndarray:
        """Horizontal unit normal pointing from the wall toward the robot."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        # rotate (-1, 0, 0) by yaw about z
        n = np.array([-c, -s, 0.0])
        return n

    @property
    def tangent(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([-s, c, 0.0])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.center_x, 0.0, 0.0])

    def slab(self) -> tuple[Cuboid, Pose]:
        """The wall as a thin box sitting just behind its contact plane."""
        box = Cuboid((0.5 * WALL_SLAB_THICKNESS, 0.5 * self.length, 0.5 * self.height))
        c = self.center - 0.5 * WALL_SLAB_THICKNESS * self.normal
        c[2] = 0.5 * self.height
        return box, Pose.from_xyz_yaw(c[0], c[1], c[2], self.yaw)


@dataclass(frozen=True)
class Obstacle:
    name: str
    box: Cuboid
    center_xy: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "center_xy", (float(self.center_xy[0]), float(self.center_xy[1])))

    @property
    def pose(self) -> Pose:
        return Pose((self.center_xy[0], self.center_xy[1], float(self.box.half_extents[2])))

    @property
    def top(self) -> float:
        return 2.0 * float(self.box.half_extents[2])


@dataclass(frozen=True)
class ObjectModel:
    name: str
    box: Cuboid

    @classmethod
    def from_half_extents(cls, name: str, half_extents) -> "ObjectModel":
        return cls(name, Cuboid(half_extents))

    @property
    def half_extents(self) -> np.ndarray:
        return self.box.half_extents


@dataclass(frozen=True)
class GripperModel:
    finger_length: float = 0.05
    finger_thickness: float = 0.01
    max_opening: float = 0.08
    grasp_depth: float = 0.02
    workspace_min: tuple[float, float, float] = (-0.45, -0.75, 0.0)
    workspace_max: tuple[float, float, float] = (1.0, 0.75, 0.6)

    def __post_init__(self):
        if self.max_opening <= 0:
            raise InvalidScene("max_opening must be positive")
        object.__setattr__(self, "workspace_min", tuple(float(v) for v in self.workspace_min))
        object.__setattr__(self, "workspace_max", tuple(float(v) for v in self.workspace_max))
        if not all(lo < hi for lo, hi in zip(self.workspace_min, self.workspace_max)):
            raise InvalidScene("workspace box is empty")

    def in_workspace(self, p, tol: float = 1e-9) -> bool:
        lo, hi = self.workspace_min, self.workspace_max
        return all(lo[i] - tol <= p[i] <= hi[i] + tol for i in range(3))


@dataclass(frozen=True)
class Scene:
    wall: Wall | None = None
    obstacles: tuple[Obstacle, ...] = ()
    gripper: GripperModel = field(default_factory=GripperModel)
    ground: Plane = GROUND

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        check_scene(self)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return self.wall == other.wall and self.obstacles == other.obstacles and self.gripper == other.gripper

    def __hash__(self):
        return hash((self.wall, self.obstacles, self.gripper))

    def require_wall(self) -> Wall:
        if self.wall is None:
            raise MissingWall("scene has no wall")
        return self.wall

    def with_wall(self, wall: Wall | None) -> "Scene":
        return Scene(wall, self.obstacles, self.gripper)

    def blockers(self) -> list[tuple[str, Cuboid, Pose]]:
        """Every fixed body an object may not penetrate, ground excluded."""
        out = [(o.name, o.box, o.pose) for o in self.obstacles]
        if self.wall is not None:
            box, pose = self.wall.slab()
            out.append(("wall", box, pose))
        return out


def check_scene(scene: Scene) -> None:
    obs = scene.obstacles
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            a, b = obs[i], obs[j]
            if box_separation(a.box, a.pose, b.box, b.pose) < -1e-9:
                raise InvalidScene(f"obstacles {a.name!r} and {b.name!r} overlap")
    if scene.wall is not None:
        wbox, wpose = scene.wall.slab()
        for o in obs:
            if box_separation(o.box, o.pose, wbox, wpose) < -1e-9:
                raise InvalidScene(f"obstacle {o.name!r} intersects the wall")


def wall_plane(scene: Scene) -> Plane:
    """Contact plane of the wall face, normal pointing toward the origin."""
    wall = scene.require_wall()
    return Plane(wall.center, wall.normal)


# ---------------------------------------------------------------------------
# serialization

_SCENE_KEYS = {"wall", "obstacles", "gripper"}
_WALL_KEYS = {"center_x", "yaw_deg", "height", "length"}
_OBSTACLE_KEYS = {"name", "half_extents", "center_xy"}
_GRIPPER_KEYS = {"finger_length", "finger_thickness", "max_opening", "grasp_depth",
                 "workspace_min", "workspace_max"}


def _check_keys(d, allowed: set[str], where: str, required: set[str] = frozenset()):
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise SchemaError(f"{where}: missing keys {sorted(missing)}")


def _floats(v, n: int, where: str) -> tuple[float, ...]:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise SchemaError(f"{where}: expected {n} numbers")
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def wall_to_dict(w: Wall | None):
    if w is None:
        return None
    return {"center_x": w.center_x, "yaw_deg": w.yaw_deg, "height": w.height, "length": w.length}


def wall_from_dict(d) -> Wall | None:
    if d is None:
        return None
    _check_keys(d, _WALL_KEYS, "wall", {"center_x"})
    try:
        kw = {k: float(v) for k, v in d.items()}
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"wall: {exc}") from None
    return Wall(**kw)


def gripper_to_dict(g: GripperModel) -> dict:
    return {
        "finger_length": g.finger_length,
        "finger_thickness": g.finger_thickness,
        "max_opening": g.max_opening,
        "grasp_depth": g.grasp_depth,
        "workspace_min": list(g.workspace_min),
        "workspace_max": list(g.workspace_max),
    }


def gripper_from_dict(d) -> GripperModel:
    if d is None:
        return GripperModel()
    _check_keys(d, _GRIPPER_KEYS, "gripper")
    kw = {}
    for k, v in d.items():
        if k.startswith("workspace"):
            kw[k] = _floats(v, 3, f"gripper.{k}")
        else:
            kw[k] = _floats([v], 1, f"gripper.{k}")[0]
    return GripperModel(**kw)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "wall": wall_to_dict(scene.wall),
        "obstacles": [
            {"name": o.name, "half_extents": o.box.half_extents.tolist(), "center_xy": list(o.center_xy)}
            for o in scene.obstacles
        ],
        "gripper": gripper_to_dict(scene.gripper),
    }


def scene_from_dict(d) -> Scene:
    _check_keys(d, _SCENE_KEYS, "scene")
    obstacles = []
    for k, od in enumerate(d.get("obstacles", [])):
        _check_keys(od, _OBSTACLE_KEYS, f"obstacles[{k}]", {"half_extents", "center_xy"})
        try:
            box = Cuboid(_floats(od["half_extents"], 3, f"obstacles[{k}].half_extents"))
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise InvalidScene(f"obstacles[{k}]: {exc}") from None
        obstacles.append(Obstacle(str(od.get("name", f"obstacle{k}")), box,
                                  _floats(od["center_xy"], 2, f"obstacles[{k}].center_xy")))
    return Scene(wall_from_dict(d.get("wall")), tuple(obstacles), gripper_from_dict(d.get("gripper")))


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def load_scene(path) -> Scene:
    return scene_from_dict(load_json(path))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2))


# Fixed obstacles of the hardware setup, dimensions in metres.
OBSTACLE_DIMS = {
    "1": (0.258, 0.308, 0.077),
    "2": (0.185, 0.235, 0.140),
    "3": (0.210, 0.255, 0.163),
}


def make_obstacle(name: str, center_xy) -> Obstacle:
    dims = OBSTACLE_DIMS[name]
    return Obstacle(name, Cuboid([0.5 * v for v in dims]), tuple(center_xy))
