"""Bundled objects, demonstrations and randomized test tasks.

Every demo is recorded on the cracker box.  Test scenes follow the task
table of the hardware study: walls are described by ``(center_x, yaw)``
and obstacles by the world ``(x, y)`` of their centres in metres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contact import (
    RUNTIME_TOL,
    grasp_config,
    is_freestanding,
    pivot_pose,
)
from .errors import Infeasible, NoClearance
from .geometry import Pose, relative_transform
from .primitives import PrimitiveKind as K
from .retarget import Demo, GoalRegion, Keyframe, build_goal_sequence
from .scene import ObjectModel, Scene, Wall, make_obstacle

# half-extents (along the wall normal when flat, along the wall, vertical)
STANDARD_OBJECTS = {
    "cracker": (0.105, 0.080, 0.030),
    "cereal": (0.095, 0.070, 0.025),
    "cocoa": (0.075, 0.050, 0.035),
    "flapjack": (0.085, 0.060, 0.025),
    "oat": (0.090, 0.065, 0.0325),
    "seasoning": (0.080, 0.045, 0.0275),
    "wafer": (0.100, 0.050, 0.020),
}
SHORT_OBJECTS = {
    "camera": (0.050, 0.045, 0.025),
    "meat": (0.0525, 0.0425, 0.0275),
    "onion": (0.0475, 0.045, 0.030),
}
# only ever used to record demonstrations
DEMO_ONLY_OBJECTS = {
    "chocolate": (0.105, 0.110, 0.030),
    "coffee": (0.105, 0.060, 0.030),
    "salt": (0.105, 0.045, 0.030),
    "oat": (0.105, 0.065, 0.030),
}

TASKS = ("grasping", "avoidance", "storage", "retrieval")
EXTRA_TASKS = ("pivot-grasp", "short-grasping")

GRASP_LIFT = 0.10
SHORT_PULL = 0.08
WALL_X_RANGE = (0.70, 0.85)
WALL_YAW_RANGE = (-10.0, 10.0)


def object_model(name: str) -> ObjectModel:
    table = {**STANDARD_OBJECTS, **SHORT_OBJECTS}
    if name not in table:
        raise KeyError(f"unknown object {name!r}")
    return ObjectModel.from_half_extents(name, table[name])


def flat_pose(obj: ObjectModel, x: float, y: float, yaw: float = 0.0) -> Pose:
    return Pose.from_xyz_yaw(x, y, float(obj.half_extents[2]), yaw)


def against_wall(obj: ObjectModel, scene: Scene, s: float = 0.0, gap: float = 0.0) -> Pose:
    """Flat pose with the body x face flush to the wall, ``s`` along it."""
    wall = scene.require_wall()
    c = wall.center + s * wall.tangent + (float(obj.half_extents[0]) + gap) * wall.normal
    return Pose.from_xyz_yaw(c[0], c[1], float(obj.half_extents[2]), wall.yaw)


def _demo(scene: Scene, obj: ObjectModel, poses: list[Pose], labels, final: Pose) -> Demo:
    frames = [Keyframe(float(i), p) for i, p in enumerate(poses)]
    return Demo(scene, obj, tuple(frames), tuple(labels), tuple(range(1, len(poses))), final)


def _lift(p: Pose, dz: float = GRASP_LIFT) -> Pose:
    return Pose(p.position + np.array([0.0, 0.0, dz]), p.quaternion)


def _shift(p: Pose, d) -> Pose:
    return Pose(p.position + np.asarray(d, dtype=float), p.quaternion)


# ---------------------------------------------------------------------------
# demonstrations

def demo_object() -> ObjectModel:
    return object_model("cracker")


def grasping_demo(obj: ObjectModel | None = None, y: float = 0.0, wall_x: float = 0.75) -> Demo:
    """Push-pivot-grasp recorded against a 0 deg wall."""
    obj = obj or demo_object()
    scene = Scene(Wall(wall_x, 0.0))
    x0 = flat_pose(obj, wall_x - 0.30, y)
    x1 = against_wall(obj, scene, y)
    x2 = pivot_pose(x1, obj, scene, 0.5 * math.pi)
    return _demo(scene, obj, [x0, x1, x2], [K.PUSH, K.PIVOT, K.GRASP], _lift(x2))


def pivot_grasp_demo() -> Demo:
    obj = demo_object()
    scene = Scene(Wall(0.75, 0.0))
    x0 = against_wall(obj, scene)
    x1 = pivot_pose(x0, obj, scene, 0.5 * math.pi)
    return _demo(scene, obj, [x0, x1], [K.PIVOT, K.GRASP], _lift(x1))


def short_grasping_demo() -> Demo:
    """Push-pivot-pull-grasp: the pull opens room for the wall-side finger."""
    obj = demo_object()
    scene = Scene(Wall(0.80, 0.0))
    x0 = flat_pose(obj, 0.50, 0.0)
    x1 = against_wall(obj, scene)
    x2 = pivot_pose(x1, obj, scene, 0.5 * math.pi)
    x3 = _shift(x2, SHORT_PULL * scene.wall.normal)
    return _demo(scene, obj, [x0, x1, x2, x3], [K.PUSH, K.PIVOT, K.PULL, K.GRASP], _lift(x3))


def avoidance_demo() -> Demo:
    """Push forward past obstacle 1, then push sideways alongside it."""
    obj = demo_object()
    scene = Scene(Wall(0.80, 0.0), (make_obstacle("1", (-0.071, 0.146)),))
    x0 = flat_pose(obj, -0.071, -0.13)
    x1 = flat_pose(obj, 0.20, -0.13)
    return _demo(scene, obj, [x0, x1], [K.PUSH, K.PUSH], flat_pose(obj, 0.20, 0.30))


def storage_demo() -> Demo:
    """Push to the wall, stand the box up, then drag it into its slot."""
    obj = demo_object()
    scene = Scene(Wall(0.80, 0.0), (make_obstacle("2", (0.108, 0.312)),))
    x0 = flat_pose(obj, 0.45, -0.05)
    x1 = against_wall(obj, scene, -0.05)
    x2 = pivot_pose(x1, obj, scene, 0.5 * math.pi)
    return _demo(scene, obj, [x0, x1, x2], [K.PUSH, K.PIVOT, K.PULL], _shift(x2, (-0.08, 0.10, 0.0)))


RETRIEVAL_DEMO_OBSTACLES = {"2": (-0.19, 0.49), "3": (0.238, 0.33)}
RETRIEVAL_TEST_OBSTACLES = {"2": (-0.19, 0.54), "3": (0.238, 0.353)}


def _retrieval_slot_y(obstacles) -> float:
    # middle of the y overlap of the two obstacles
    ys = []
    for name, (_, cy) in obstacles.items():
        ys.append(cy)
    return 0.5 * (max(ys) + min(ys))


def retrieval_demo() -> Demo:
    """Pull out from between obstacles 2 and 3, push to the wall, pivot, grasp."""
    obj = demo_object()
    obs = tuple(make_obstacle(n, c) for n, c in RETRIEVAL_DEMO_OBSTACLES.items())
    scene = Scene(Wall(0.75, 0.0), obs)
    x0 = flat_pose(obj, 0.018, _retrieval_slot_y(RETRIEVAL_DEMO_OBSTACLES))
    x1 = flat_pose(obj, 0.018, 0.05)
    x2 = against_wall(obj, scene, 0.05)
    x3 = pivot_pose(x2, obj, scene, 0.5 * math.pi)
    return _demo(scene, obj, [x0, x1, x2, x3], [K.PULL, K.PUSH, K.PIVOT, K.GRASP], _lift(x3))


DEMOS = {
    "grasping": grasping_demo,
    "avoidance": avoidance_demo,
    "storage": storage_demo,
    "retrieval": retrieval_demo,
    "pivot-grasp": pivot_grasp_demo,
    "short-grasping": short_grasping_demo,
}


def invariance_demos() -> list[Demo]:
    """Four push-pivot-grasp demos on different boxes and absolute poses.

    The boxes share their extents across and normal to the wall, and the
    demos are offset along the pivot axis, so every relative switch
    transform is identical.
    """
    out = []
    for (name, he), y in zip(DEMO_ONLY_OBJECTS.items(), (-0.12, -0.04, 0.05, 0.13)):
        out.append(grasping_demo(ObjectModel.from_half_extents(name, he), y))
    return out


# ---------------------------------------------------------------------------
# test tasks

@dataclass(frozen=True)
class TaskSpec:
    scene: Scene
    object: ObjectModel
    x0: Pose
    demo: Demo
    final_goal: GoalRegion | None = None
    name: str = ""
    seed: int = 0

    def __post_init__(self):
        if not is_freestanding(self.x0, self.object, self.scene, RUNTIME_TOL):
            raise Infeasible("start pose is not freestanding in the test scene")


def random_wall(rng: np.random.Generator) -> Wall:
    return Wall(float(rng.uniform(*WALL_X_RANGE)), float(rng.uniform(*WALL_YAW_RANGE)))


def _jitter(rng: np.random.Generator, pos: float, yaw_deg: float) -> tuple[float, float, float]:
    return (float(rng.uniform(-pos, pos)), float(rng.uniform(-pos, pos)),
            math.radians(float(rng.uniform(-yaw_deg, yaw_deg))))


def _needs_pull(obj: ObjectModel, scene: Scene, demo: Demo, x0: Pose) -> bool:
    """Whether the retargeted pivot goal leaves no room for the wall-side finger."""
    try:
        seq = build_goal_sequence(demo, scene, obj, x0)
        grasp_config(seq.goals[-2].center, obj, scene.gripper, scene)
    except NoClearance:
        return True
    return False


def grasping_task(obj: ObjectModel | str, seed: int = 0, wall: Wall | None = None) -> TaskSpec:
    """Occluded grasping; switches to the extra-pull demo for short boxes."""
    obj = object_model(obj) if isinstance(obj, str) else obj
    rng = np.random.default_rng([seed, 1])
    scene = Scene(wall or random_wall(rng))
    dx, dy, dyaw = _jitter(rng, 0.02, 10.0)
    x0 = flat_pose(obj, 0.45 + dx, dy, dyaw)
    demo = grasping_demo()
    name = "grasping"
    if _needs_pull(obj, scene, demo, x0):
        demo, name = short_grasping_demo(), "short-grasping"
    return TaskSpec(scene, obj, x0, demo, None, name, seed)


def short_grasping_task(obj: ObjectModel | str, seed: int = 0) -> TaskSpec:
    """The short-box variant on the test wall of the short-object study."""
    obj = object_model(obj) if isinstance(obj, str) else obj
    rng = np.random.default_rng([seed, 5])
    scene = Scene(Wall(0.75, 0.0))
    dx, dy, dyaw = _jitter(rng, 0.01, 5.0)
    return TaskSpec(scene, obj, flat_pose(obj, 0.45 + dx, dy, dyaw), short_grasping_demo(), None,
                    "short-grasping", seed)


def pivot_grasp_task(obj: ObjectModel | str, seed: int = 0) -> TaskSpec:
    obj = object_model(obj) if isinstance(obj, str) else obj
    rng = np.random.default_rng([seed, 6])
    scene = Scene(Wall(0.75, 0.0))
    x0 = against_wall(obj, scene, float(rng.uniform(-0.05, 0.05)))
    return TaskSpec(scene, obj, x0, pivot_grasp_demo(), None, "pivot-grasp", seed)


def avoidance_task(obj: ObjectModel | str, seed: int = 0) -> TaskSpec:
    obj = object_model(obj) if isinstance(obj, str) else obj
    rng = np.random.default_rng([seed, 2])
    scene = Scene(random_wall(rng), (make_obstacle("1", (-0.071, 0.146)),))
    dx, dy, dyaw = _jitter(rng, 0.01, 5.0)
    x0 = flat_pose(obj, -0.071 + dx, -0.13 + dy, dyaw)
    return TaskSpec(scene, obj, x0, avoidance_demo(), None, "avoidance", seed)


def storage_task(obj: ObjectModel | str, seed: int = 0) -> TaskSpec:
    obj = object_model(obj) if isinstance(obj, str) else obj
    rng = np.random.default_rng([seed, 3])
    scene = Scene(random_wall(rng), (make_obstacle("2", (0.108, 0.312)),))
    dx, dy, dyaw = _jitter(rng, 0.02, 10.0)
    x0 = flat_pose(obj, 0.45 + dx, -0.05 + dy, dyaw)
    return TaskSpec(scene, obj, x0, storage_demo(), None, "storage", seed)


def retrieval_task(obj: ObjectModel | str, seed: int = 0) -> TaskSpec:
    obj = object_model(obj) if isinstance(obj, str) else obj
    rng = np.random.default_rng([seed, 4])
    obs = tuple(make_obstacle(n, c) for n, c in RETRIEVAL_TEST_OBSTACLES.items())
    scene = Scene(random_wall(rng), obs)
    dx, dy, dyaw = _jitter(rng, 0.005, 1.0)
    x0 = flat_pose(obj, 0.018 + dx, _retrieval_slot_y(RETRIEVAL_TEST_OBSTACLES) + dy, dyaw)
    return TaskSpec(scene, obj, x0, retrieval_demo(), None, "retrieval", seed)


TASK_BUILDERS = {
    "grasping": grasping_task,
    "avoidance": avoidance_task,
    "storage": storage_task,
    "retrieval": retrieval_task,
    "pivot-grasp": pivot_grasp_task,
    "short-grasping": short_grasping_task,
}


def make_task(task: str, obj: ObjectModel | str, seed: int = 0) -> TaskSpec:
    if task not in TASK_BUILDERS:
        raise KeyError(f"unknown task {task!r}; expected one of {sorted(TASK_BUILDERS)}")
    return TASK_BUILDERS[task](obj, seed)


def task_batch(tasks=TASKS, objects=tuple(STANDARD_OBJECTS), seeds=range(5)) -> list[TaskSpec]:
    """Tasks x objects x seeds, in that nesting order."""
    return [make_task(t, o, s) for t in tasks for o in objects for s in seeds]


def demo_switch_offsets(demo: Demo) -> list[Pose]:
    anchors = demo.anchor_poses()
    return [relative_transform(a, b) for a, b in zip(anchors, anchors[1:])]


def wall_offset(demo: Demo, scene: Scene) -> tuple[float, float]:
    """Absolute wall x and yaw (deg) differences between demo and test scene."""
    dw, tw = demo.scene.wall, scene.wall
    if dw is None or tw is None:
        return math.inf, math.inf
    return abs(dw.center_x - tw.center_x), abs(dw.yaw_deg - tw.yaw_deg)


__all__ = [
    "DEMOS",
    "EXTRA_TASKS",
    "SHORT_OBJECTS",
    "STANDARD_OBJECTS",
    "TASKS",
    "TaskSpec",
    "against_wall",
    "flat_pose",
    "invariance_demos",
    "make_task",
    "object_model",
    "task_batch",
    "wall_offset",
]
