"""Independent closed-form references used by several test modules."""
import math

import numpy as np

from contact_retarget.geometry import Pose


def _rot_angle(qa, qb) -> float:
    d = min(1.0, abs(float(np.dot(qa, qb))))
    return 2.0 * math.acos(d)


def ground_wall_projection(guess: Pose, half_extents, wall, orientation_weight: float) -> Pose:
    """Best flat pose touching ground and wall for a flat, upright-ish guess.

    The box must lie face down with one vertical face flush against the
    wall, so its yaw is the wall yaw plus a multiple of 90 degrees.  For each
    such yaw the nearest position is found by moving along the wall normal
    and down to the resting height; the candidate with the lowest weighted
    cost wins.
    """
    h = np.asarray(half_extents, dtype=float)
    n = wall.normal
    d = float((guess.position - wall.center) @ n)
    best = None
    for j in range(4):
        yaw = wall.yaw + j * math.pi / 2
        e = h[0] if j % 2 == 0 else h[1]
        p = guess.position + (e - d) * n
        p[2] = h[2]
        cand = Pose.from_xyz_yaw(p[0], p[1], p[2], yaw)
        cost = float(np.sum((p - guess.position) ** 2)) + orientation_weight * _rot_angle(
            cand.quaternion, guess.quaternion) ** 2
        if best is None or cost < best[0]:
            best = (cost, cand)
    return best[1]


def rotation_angle(a: Pose, b: Pose) -> float:
    return _rot_angle(a.quaternion, b.quaternion)
