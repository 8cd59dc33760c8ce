"""Rigid transforms, cuboids, planes and oriented-box collision tests.

Quaternions are stored scalar-first ``(w, x, y, z)``.  A :class:`Pose`
maps body coordinates to world coordinates: ``p_world = R @ p_body + t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

_EYE = np.eye(3)


def _frozen(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# quaternion helpers

def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    # canonical hemisphere keeps serialized values stable
    if q[0] < 0.0:
        q = -q
    return q


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def quat_from_rotvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    theta = math.sqrt(float(v @ v))
    if theta < 1e-12:
        q = np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
        return q / math.sqrt(float(q @ q))
    s = math.sin(0.5 * theta) / theta
    return np.array([math.cos(0.5 * theta), v[0] * s, v[1] * s, v[2] * s])


def quat_to_rotvec(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    vn = math.sqrt(float(q[1:] @ q[1:]))
    if vn < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * math.atan2(vn, q[0])
    return q[1:] * (angle / vn)


def quat_angle(qa, qb) -> float:
    """Geodesic angle between two orientations, in ``[0, pi]``."""
    d = abs(float(np.dot(qa, qb)))
    return 2.0 * math.acos(min(1.0, d))


def rotvec_to_matrix(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    theta = math.sqrt(float(v @ v))
    k = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    if theta < 1e-8:
        return _EYE + k + 0.5 * (k @ k)
    return _EYE + (math.sin(theta) / theta) * k + ((1.0 - math.cos(theta)) / theta**2) * (k @ k)


def matrix_to_rotvec(m) -> np.ndarray:
    return quat_to_rotvec(matrix_to_quat(m))


# ---------------------------------------------------------------------------
# poses

@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position, (3,)))
        object.__setattr__(self, "quaternion", _frozen(quat_normalize(self.quaternion), (4,)))

    @cached_property
    def rotation(self) -> np.ndarray:
        m = quat_to_matrix(self.quaternion)
        m.setflags(write=False)
        return m

    @classmethod
    def from_matrix(cls, rotation, position) -> "Pose":
        return cls(position, matrix_to_quat(rotation))

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float = 0.0) -> "Pose":
        return cls((x, y, z), (math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)))

    def transform_points(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.rotation.T + self.position

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.position, other.position)
                    and np.array_equal(self.quaternion, other.quaternion))

    def __hash__(self):
        return hash((self.position.tobytes(), self.quaternion.tobytes()))

    def __repr__(self):
        p = ", ".join(f"{v:.6g}" for v in self.position)
        q = ", ".join(f"{v:.6g}" for v in self.quaternion)
        return f"Pose(({p}), ({q}))"


IDENTITY = Pose()


def translate(x: float, y: float, z: float) -> Pose:
    return Pose((x, y, z))


def rot_x(angle: float) -> Pose:
    return Pose((0, 0, 0), (math.cos(0.5 * angle), math.sin(0.5 * angle), 0.0, 0.0))


def rot_y(angle: float) -> Pose:
    return Pose((0, 0, 0), (math.cos(0.5 * angle), 0.0, math.sin(0.5 * angle), 0.0))


def rot_z(angle: float) -> Pose:
    return Pose((0, 0, 0), (math.cos(0.5 * angle), 0.0, 0.0, math.sin(0.5 * angle)))


def compose(a: Pose, b: Pose) -> Pose:
    """Apply ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.position + a.position, quat_mul(a.quaternion, b.quaternion))


def inverse(p: Pose) -> Pose:
    qi = quat_conj(p.quaternion)
    return Pose(-(p.rotation.T @ p.position), qi)


def relative_transform(a: Pose, b: Pose) -> Pose:
    """World-frame transform ``X`` with ``compose(X, a) == b``."""
    return compose(b, inverse(a))


def position_distance(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.position - b.position))


def angle_distance(a: Pose, b: Pose) -> float:
    return quat_angle(a.quaternion, b.quaternion)


# Rotations mapping a cuboid onto itself (identity + half turns about body axes).
_BOX_SYMMETRIES = (
    np.array([1.0, 0.0, 0.0, 0.0]),
    np.array([0.0, 1.0, 0.0, 0.0]),
    np.array([0.0, 0.0, 1.0, 0.0]),
    np.array([0.0, 0.0, 0.0, 1.0]),
)


def box_angle_distance(a: Pose, b: Pose) -> float:
    """Orientation distance between two placements of the same cuboid.

    A cuboid occupies the same volume under half turns about its body axes,
    so the distance is taken over those four equivalent frames.
    """
    return min(quat_angle(a.quaternion, quat_mul(b.quaternion, s)) for s in _BOX_SYMMETRIES)


def box_symmetric_quaternions(q) -> list[np.ndarray]:
    return [quat_normalize(quat_mul(q, s)) for s in _BOX_SYMMETRIES]


def pose_to_list(p: Pose) -> list[float]:
    return [float(v) for v in p.position] + [float(v) for v in p.quaternion]


# ---------------------------------------------------------------------------
# cuboids and planes

@dataclass(frozen=True, eq=False)
class Cuboid:
    half_extents: np.ndarray

    def __post_init__(self):
        h = _frozen(self.half_extents, (3,))
        if not np.all(h > 0.0):
            raise ValueError(f"half extents must be positive, got {h.tolist()}")
        object.__setattr__(self, "half_extents", h)

    def __eq__(self, other):
        return isinstance(other, Cuboid) and np.array_equal(self.half_extents, other.half_extents)

    def __hash__(self):
        return hash(self.half_extents.tobytes())

    def __repr__(self):
        return f"Cuboid({self.half_extents.tolist()})"


_CORNER_SIGNS = np.array(list(product((-1.0, 1.0), repeat=3)))


def corners(box: Cuboid, pose: Pose) -> np.ndarray:
    """The 8 world-frame vertices, shape ``(8, 3)``."""
    return (_CORNER_SIGNS * box.half_extents) @ pose.rotation.T + pose.position


def corners_rt(half_extents, rotation, position) -> np.ndarray:
    return (_CORNER_SIGNS * half_extents) @ rotation.T + position


@dataclass(frozen=True, eq=False)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "point", _frozen(self.point, (3,)))
        object.__setattr__(self, "normal", _frozen(n / norm, (3,)))


def signed_distance_point_plane(p, plane: Plane):
    """Positive on the side the normal points to; vectorised over rows of ``p``."""
    return (np.asarray(p, dtype=float) - plane.point) @ plane.normal


def point_box_signed_distance(p, box: Cuboid, pose: Pose) -> float:
    """Signed distance from a point to a cuboid surface (negative inside)."""
    local = pose.rotation.T @ (np.asarray(p, dtype=float) - pose.position)
    d = np.abs(local) - box.half_extents
    outside = np.maximum(d, 0.0)
    return float(math.sqrt(float(outside @ outside)) + min(float(d.max()), 0.0))


# ---------------------------------------------------------------------------
# separating axis test

def box_separation(box_a: Cuboid, pose_a: Pose, box_b: Cuboid, pose_b: Pose) -> float:
    """Largest gap over the 15 separating-axis candidates.

    Positive means the boxes are apart by at least that much; negative is
    minus the smallest overlap depth (a penetration estimate).
    """
    return _separation(box_a.half_extents, pose_a.rotation, pose_a.position,
                       box_b.half_extents, pose_b.rotation, pose_b.position)


def _separation(ha, ra, pa, hb, rb, pb) -> float:
    d = pb - pa
    # rows of c are B's axes expressed in A's frame
    c = ra.T @ rb
    absc = np.abs(c) + 1e-12
    t = ra.T @ d
    best = -math.inf
    # A's face axes
    gaps = np.abs(t) - (ha + absc @ hb)
    best = max(best, float(gaps.max()))
    # B's face axes
    tb = rb.T @ d
    gaps = np.abs(tb) - (hb + absc.T @ ha)
    best = max(best, float(gaps.max()))
    # edge-edge axes A_i x B_j
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            axis_len = math.sqrt(max(1.0 - c[i, j] ** 2, 0.0))
            if axis_len < 1e-6:
                continue
            ra_ = ha[i1] * absc[i2, j] + ha[i2] * absc[i1, j]
            rb_ = hb[j1] * absc[i, j2] + hb[j2] * absc[i, j1]
            dist = abs(t[i2] * c[i1, j] - t[i1] * c[i2, j])
            best = max(best, (dist - ra_ - rb_) / axis_len)
    return best


def boxes_overlap(box_a: Cuboid, pose_a: Pose, box_b: Cuboid, pose_b: Pose, tol: float = 0.0) -> bool:
    """True iff the oriented boxes intersect by more than ``tol``."""
    return box_separation(box_a, pose_a, box_b, pose_b) < -tol
