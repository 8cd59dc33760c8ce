"""Contact retargeting: transfer one extrinsic-manipulation demo to new scenes.

A demo is a chain of primitives (push, pull, pivot, grasp) whose switches
are labelled with the contacts they need.  Those requirements are solved for
in the test scene to get goal poses, which the primitives then track in a
deterministic quasi-static simulator.
"""
from .errors import (
    ContactRetargetError,
    Infeasible,
    InvalidScene,
    MissingWall,
    NoClearance,
    ParseError,
    PolicyFailure,
    SchemaError,
    TooWide,
    Unreachable,
    WorkspaceViolation,
)
from .geometry import Cuboid, Pose, box_angle_distance, compose, inverse, relative_transform
from .pipeline import (
    RunReport,
    audit_records,
    compose_policy,
    compose_policy_ablated,
    evaluate,
    validate_demo,
)
from .primitives import PrimitiveKind
from .retarget import (
    Demo,
    GoalRegion,
    GoalSequence,
    RetargetConfig,
    build_goal_sequence,
    load_demo,
    remap_x,
    retarget_q,
    retarget_x,
)
from .scene import GripperModel, ObjectModel, Obstacle, Scene, Wall
from .sim import SimState, advance, rollout, step
from .templates import TaskSpec, make_task, task_batch

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
