"""Top-down and side SVG strips of a serialized trajectory.

Output depends only on the trajectory records, so the same file always
renders to the same bytes.
"""
from __future__ import annotations

import numpy as np

from .geometry import corners
from .retarget import GoalRegion, object_from_dict
from .scene import Scene, scene_from_dict
from .sim import state_from_dict

WIDTH = 640
MARGIN = 20
N_KEYFRAMES = 8


def _hull(pts: np.ndarray) -> np.ndarray:
    """Convex hull of 2-D points, counter-clockwise (monotone chain)."""
    p = sorted({(round(float(a), 12), round(float(b), 12)) for a, b in pts})
    if len(p) <= 2:
        return np.array(p)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for q in p:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    for q in reversed(p):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return np.array(lower[:-1] + upper[:-1])


def keyframe_indices(records: list[dict]) -> list[int]:
    """Segment ends plus evenly spaced states (state indices, sorted, unique)."""
    n = len(records)
    if n == 0:
        return []
    idx = set(np.linspace(0, n - 1, min(N_KEYFRAMES, n)).round().astype(int).tolist())
    for i in range(n - 1):
        if records[i].get("segment") != records[i + 1].get("segment"):
            idx.add(i)
    return sorted(idx)


class _Canvas:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        span = np.maximum(np.asarray(hi, dtype=float) - self.lo, 1e-6)
        self.scale = (WIDTH - 2 * MARGIN) / float(span.max())
        self.height = int(round(float(span[1]) * self.scale)) + 2 * MARGIN
        self.items: list[str] = []

    def xy(self, p) -> tuple[float, float]:
        u = MARGIN + (p[0] - self.lo[0]) * self.scale
        v = self.height - MARGIN - (p[1] - self.lo[1]) * self.scale
        return u, v

    def polygon(self, pts, style: str):
        s = " ".join("{:.2f},{:.2f}".format(*self.xy(p)) for p in pts)
        self.items.append(f'<polygon points="{s}" {style}/>')

    def line(self, a, b, style: str):
        (x1, y1), (x2, y2) = self.xy(a), self.xy(b)
        self.items.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" {style}/>')

    def circle(self, c, r: float, style: str):
        x, y = self.xy(c)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{max(r * self.scale, 2.0):.2f}" {style}/>')

    def svg(self, title: str) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{self.height}" '
                f'viewBox="0 0 {WIDTH} {self.height}">')
        return "\n".join([head, f"<title>{title}</title>",
                          f'<rect width="{WIDTH}" height="{self.height}" fill="white"/>', *self.items, "</svg>"]) + "\n"


def _bounds(scene: Scene, pts: list[np.ndarray], axes) -> tuple[np.ndarray, np.ndarray]:
    allp = [np.zeros(2)]
    if scene.wall is not None:
        w = scene.wall
        for s in (-0.5, 0.5):
            e = w.center + s * w.length * w.tangent
            allp.append(np.array([e[axes[0]], w.height if axes[1] == 2 else e[1]]))
    for _, box, pose in scene.blockers():
        c = corners(box, pose)
        allp.extend(c[:, axes])
    for p in pts:
        allp.extend(np.atleast_2d(p)[:, axes])
    a = np.array(allp)
    return a.min(axis=0) - 0.05, a.max(axis=0) + 0.05


def render(records: list[dict]) -> dict[str, str]:
    """SVG text for the ``top`` (x-y) and ``side`` (x-z) views."""
    head = records[0].get("header") if records else None
    states = [r for r in records if "header" not in r]
    if head is None or "task" not in head:
        scene, obj, goals = Scene(), None, []
    else:
        t = head["task"]
        scene = scene_from_dict(t["scene"])
        obj = object_from_dict({"name": t["object"], "half_extents": t["half_extents"]})
        goals = [GoalRegion.from_dict(g) for g in head.get("goals", [])]
    frames = []
    if obj is not None:
        for i in keyframe_indices(states):
            x = state_from_dict(states[i]).object_pose
            frames.append(corners(obj.box, x))
    centers = [g.center.position for g in goals]
    out = {}
    for view, axes in (("top", (0, 1)), ("side", (0, 2))):
        lo, hi = _bounds(scene, frames + centers, axes)
        cv = _Canvas(lo, hi)
        if axes[1] == 2:
            cv.line((lo[0], 0.0), (hi[0], 0.0), 'stroke="#444" stroke-width="1"')
        for name, box, pose in scene.blockers():
            fill = "#9bb" if name == "wall" else "#bbb"
            cv.polygon(_hull(corners(box, pose)[:, axes]), f'fill="{fill}" stroke="#555" stroke-width="1"')
        n = len(frames)
        for k, c in enumerate(frames):
            shade = int(200 - 150 * (k / max(n - 1, 1)))
            cv.polygon(_hull(c[:, axes]),
                       f'fill="none" stroke="rgb({shade},{shade // 2},40)" stroke-width="1.5" class="object"')
        for g in goals:
            cv.circle(g.center.position[list(axes)], g.pos_radius,
                      'fill="none" stroke="#27c" stroke-width="1.5" stroke-dasharray="3,2" class="goal"')
        out[view] = cv.svg(f"{view} view")
    return out


__all__ = ["keyframe_indices", "render"]
