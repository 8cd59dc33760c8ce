"""Demo validation, policy composition and batch evaluation.

``compose_policy`` builds the goal sequence for a task, then for every
primitive puts the hand on the object in the primitive's robot contact and
rolls the primitive out until the object enters its goal region.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .contact import RUNTIME_TOL, gripper_at_tip, is_freestanding, satisfies_env, unmet_env
from .errors import Infeasible, SchemaError
from .geometry import Pose
from .primitives import PrimitiveKind, make_policy, required_contact
from .retarget import Demo, GoalRegion, GoalSequence, RetargetConfig, build_goal_sequence, retarget_q
from .scene import ObjectModel, Scene, scene_to_dict
from .sim import SimState, Trajectory, make_state, move_robot_to, rollout, state_from_dict, state_to_dict
from .templates import TaskSpec

DEMO_TOL = 0.005
MAX_STEPS = 2000
HOME_TIP = (0.30, 0.0, 0.35)
VARIANTS = ("retarget", "ablate")
CSV_COLUMNS = ("task", "variant", "object", "seed", "success", "failure_reason", "solve_ms", "steps")


# ---------------------------------------------------------------------------
# demo validation

@dataclass(frozen=True)
class SwitchCheck:
    index: int
    freestanding: bool
    env_ok: bool
    residual: float
    unmet: str | None

    def __post_init__(self):
        object.__setattr__(self, "freestanding", bool(self.freestanding))
        object.__setattr__(self, "env_ok", bool(self.env_ok))
        object.__setattr__(self, "residual", float(self.residual))

    @property
    def ok(self) -> bool:
        return self.freestanding and self.env_ok


@dataclass(frozen=True)
class DemoReport:
    checks: tuple[SwitchCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "switches": [
            {"index": c.index, "ok": c.ok, "freestanding": c.freestanding, "env_ok": c.env_ok,
             "residual": c.residual, "unmet": c.unmet} for c in self.checks]}


def _env_residual(x: Pose, env, scene: Scene, obj: ObjectModel) -> float:
    """Largest contact residual of ``x`` against the requirements in ``env``."""
    from .contact import EnvContact, ground_residual, penetration, wall_residual

    r = penetration(x, obj, scene)
    if EnvContact.GROUND in env:
        r = max(r, abs(ground_residual(x, obj)))
    if EnvContact.WALL in env:
        if scene.wall is None:
            return math.inf
        r = max(r, float(np.max(np.abs(wall_residual(x, obj, scene)))))
    return r


def validate_demo(demo: Demo, tol: float = DEMO_TOL) -> DemoReport:
    """Check every switch pose against both adjacent requirements in the demo scene."""
    if not isinstance(demo, Demo):
        raise SchemaError("expected a Demo")
    checks = []
    for i, x in enumerate(demo.switch_poses(), 1):
        a, b = demo.contact_pair(i)
        env = a.env | b.env
        checks.append(SwitchCheck(
            i,
            is_freestanding(x, demo.object, demo.scene, tol),
            satisfies_env(x, env, demo.scene, demo.object, tol),
            _env_residual(x, env, demo.scene, demo.object),
            unmet_env(x, env, demo.scene, demo.object, tol),
        ))
    return DemoReport(tuple(checks))


# ---------------------------------------------------------------------------
# composition

@dataclass
class PrimitiveRun:
    kind: PrimitiveKind
    outcome: str
    reason: str | None
    steps: int
    rollout_ms: float
    solve_ms: float


@dataclass
class RunReport:
    goal_sequence: GoalSequence | None
    primitives: list[PrimitiveRun] = field(default_factory=list)
    success: bool = False
    failure_reason: str | None = None
    goal_ms: float = 0.0
    states: list[SimState] = field(default_factory=list)
    segments: list[int] = field(default_factory=list)
    switch_checks: list[SwitchCheck] = field(default_factory=list)

    @property
    def solve_ms(self) -> float:
        return self.goal_ms + sum(p.solve_ms for p in self.primitives)

    @property
    def rollout_ms(self) -> float:
        return sum(p.rollout_ms for p in self.primitives)

    @property
    def steps(self) -> int:
        return sum(p.steps for p in self.primitives)

    def to_dict(self, task: TaskSpec | None = None) -> dict:
        d = {
            "success": self.success,
            "failure_reason": self.failure_reason,
            "solve_ms": self.solve_ms,
            "rollout_ms": self.rollout_ms,
            "steps": self.steps,
            "primitives": [{"kind": p.kind.value, "outcome": p.outcome, "reason": p.reason, "steps": p.steps,
                            "rollout_ms": p.rollout_ms, "solve_ms": p.solve_ms} for p in self.primitives],
            "goals": [g.to_dict() for g in self.goal_sequence.goals] if self.goal_sequence else [],
            "retargeted": self.goal_sequence.retargeted if self.goal_sequence else None,
            "switch_checks": [{"index": c.index, "ok": c.ok, "residual": c.residual} for c in self.switch_checks],
        }
        if task is not None:
            d["task"] = {"name": task.name, "seed": task.seed, "object": task.object.name,
                         "half_extents": task.object.half_extents.tolist(),
                         "labels": [k.value for k in task.demo.labels], "scene": scene_to_dict(task.scene)}
        return d

    def trajectory_records(self, task: TaskSpec | None = None) -> list[dict]:
        """Header (when ``task`` is given) followed by one record per state."""
        out = [{"header": self.to_dict(task)}] if task is not None else []
        out += [{**state_to_dict(s), "segment": k} for s, k in zip(self.states, self.segments)]
        return out


def home_state(task: TaskSpec) -> SimState:
    g = gripper_at_tip(HOME_TIP, task.scene.gripper)
    return make_state(task.x0, g, task.scene, task.object)


def _precondition(x: Pose, env, scene: Scene, obj: ObjectModel) -> str | None:
    name = unmet_env(x, env, scene, obj, RUNTIME_TOL)
    return None if name is None else f"precondition: {name}"


def _check_switch(i: int, x: Pose, labels, scene: Scene, obj: ObjectModel) -> SwitchCheck:
    env = required_contact(labels[i - 1]).env | required_contact(labels[i]).env
    return SwitchCheck(i, is_freestanding(x, obj, scene, RUNTIME_TOL), satisfies_env(x, env, scene, obj, RUNTIME_TOL),
                       _env_residual(x, env, scene, obj), unmet_env(x, env, scene, obj, RUNTIME_TOL))


def _execute(task: TaskSpec, seq: GoalSequence, report: RunReport, max_steps: int) -> RunReport:
    scene, obj, labels = task.scene, task.object, task.demo.labels
    state = home_state(task)
    report.states.append(state)
    report.segments.append(-1)
    for i, (kind, goal) in enumerate(zip(labels, seq.goals)):
        sigma = required_contact(kind)
        why = _precondition(state.object_pose, sigma.env, scene, obj)
        if why is None and i + 1 < len(labels):
            # the switch goal must also suit the primitive that follows
            env = sigma.env | required_contact(labels[i + 1]).env
            why = _precondition(goal.center, env, scene, obj)
        if why is not None:
            report.primitives.append(PrimitiveRun(kind, "failure", why, 0, 0.0, 0.0))
            report.failure_reason = why
            return report
        t0 = time.perf_counter()
        try:
            q = retarget_q(state.object_pose, sigma, scene, obj)
            state = move_robot_to(state, q, scene, obj)
        except Infeasible as exc:
            reason = f"{type(exc).__name__}: {exc}"
            report.primitives.append(PrimitiveRun(kind, "failure", reason, 0, 0.0,
                                                  1e3 * (time.perf_counter() - t0)))
            report.failure_reason = reason
            return report
        solve_ms = 1e3 * (time.perf_counter() - t0)
        report.states.append(state)
        report.segments.append(i)
        t0 = time.perf_counter()
        traj: Trajectory = rollout(make_policy(kind), state, goal, scene, obj, max_steps)
        run = PrimitiveRun(kind, traj.outcome.kind, traj.outcome.reason, len(traj.actions),
                           1e3 * (time.perf_counter() - t0), solve_ms)
        report.primitives.append(run)
        report.states.extend(traj.states[1:])
        report.segments.extend([i] * (len(traj.states) - 1))
        state = traj.states[-1]
        if not traj.outcome.reached:
            report.failure_reason = f"{kind.value}: {traj.outcome.reason or traj.outcome.kind}"
            return report
        if i + 1 < len(labels):
            report.switch_checks.append(_check_switch(i + 1, state.object_pose, labels, scene, obj))
    report.success = seq.goals[-1].contains(state.object_pose, obj, scene)
    if not report.success:
        report.failure_reason = "final goal not reached"
    return report


def _final_goal(task: TaskSpec, cfg: RetargetConfig) -> GoalRegion | None:
    return task.final_goal


def compose_policy(task: TaskSpec, cfg: RetargetConfig = RetargetConfig(), max_steps: int = MAX_STEPS,
                   retarget: bool = True) -> RunReport:
    """Build the goal sequence for ``task`` and run every primitive in turn.

    Raises Infeasible when the goal sequence cannot be built; every later
    problem ends up as the report's failure reason.
    """
    t0 = time.perf_counter()
    seq = build_goal_sequence(task.demo, task.scene, task.object, task.x0, _final_goal(task, cfg), cfg, retarget)
    report = RunReport(seq, goal_ms=1e3 * (time.perf_counter() - t0))
    return _execute(task, seq, report, max_steps)


def compose_policy_ablated(task: TaskSpec, cfg: RetargetConfig = RetargetConfig(),
                           max_steps: int = MAX_STEPS) -> RunReport:
    """As :func:`compose_policy`, with the remapped guesses used directly as goals."""
    return compose_policy(task, cfg, max_steps, retarget=False)


# ---------------------------------------------------------------------------
# post-hoc audit

def audit_records(records: list[dict]) -> bool:
    """Recompute success from a serialized trajectory (header plus states) alone."""
    from .retarget import object_from_dict
    from .scene import scene_from_dict

    if not records or "header" not in records[0]:
        raise SchemaError("trajectory has no header record")
    head = records[0]["header"]
    t = head["task"]
    scene = scene_from_dict(t["scene"])
    obj = object_from_dict({"name": t["object"], "half_extents": t["half_extents"]})
    labels = [PrimitiveKind(k) for k in t["labels"]]
    goals = [GoalRegion.from_dict(g) for g in head["goals"]]
    if len(goals) != len(labels):
        return False
    last = {}
    for r in records[1:]:
        last[r["segment"]] = r
    for i in range(len(labels)):
        if i not in last:
            return False
        x = state_from_dict(last[i]).object_pose
        if not goals[i].contains(x, obj, scene):
            return False
        if i + 1 < len(labels) and not _check_switch(i + 1, x, labels, scene, obj).ok:
            return False
    return True


# ---------------------------------------------------------------------------
# batch evaluation

@dataclass(frozen=True)
class TrialRow:
    task: str
    variant: str
    object: str
    seed: int
    success: bool
    failure_reason: str
    solve_ms: float
    steps: int
    rollout_ms: float = 0.0
    switch_violations: int = 0

    def csv_row(self) -> list:
        return [self.task, self.variant, self.object, self.seed, int(self.success), self.failure_reason,
                f"{self.solve_ms:.3f}", self.steps]


def run_trial(task: TaskSpec, variant: str, cfg: RetargetConfig = RetargetConfig(),
              max_steps: int = MAX_STEPS) -> TrialRow:
    try:
        rep = compose_policy(task, cfg, max_steps, retarget=(variant == "retarget"))
    except Infeasible as exc:
        return TrialRow(task.name, variant, task.object.name, task.seed, False, f"infeasible: {exc}", 0.0, 0)
    bad = sum(1 for c in rep.switch_checks if not c.ok)
    return TrialRow(task.name, variant, task.object.name, task.seed, rep.success, rep.failure_reason or "",
                    rep.solve_ms, rep.steps, rep.rollout_ms, bad)


def _run_trial_args(args) -> TrialRow:
    return run_trial(*args)


def eval_workers() -> int:
    env = os.environ.get("CONTACT_RETARGET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def evaluate(batch: list[TaskSpec], variants=VARIANTS, cfg: RetargetConfig = RetargetConfig(),
             max_steps: int = MAX_STEPS, workers: int | None = None) -> list[TrialRow]:
    """One row per (task, variant), in batch order then variant order."""
    jobs = [(task, v, cfg, max_steps) for task in batch for v in variants]
    if not jobs:
        return []
    workers = eval_workers() if workers is None else max(1, workers)
    if workers == 1 or len(jobs) == 1:
        return [_run_trial_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_args, jobs, chunksize=1))


def rows_to_csv(rows: list[TrialRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


def summarize(rows: list[TrialRow]) -> dict:
    """Per (task, variant): trials, successes, rate, mean times, failure histogram."""
    out: dict = {}
    for r in rows:
        s = out.setdefault((r.task, r.variant), {"trials": 0, "successes": 0, "solve_ms": 0.0,
                                                 "rollout_ms": 0.0, "failures": Counter()})
        s["trials"] += 1
        s["successes"] += int(r.success)
        s["solve_ms"] += r.solve_ms
        s["rollout_ms"] += r.rollout_ms
        if not r.success:
            s["failures"][r.failure_reason] += 1
    for s in out.values():
        n = s["trials"]
        s["rate"] = s["successes"] / n
        s["solve_ms"] /= n
        s["rollout_ms"] /= n
        s["failures"] = dict(sorted(s["failures"].items()))
    return out


def summary_lines(rows: list[TrialRow]) -> list[str]:
    lines = []
    for (task, variant), s in sorted(summarize(rows).items()):
        lines.append(f"{task:<15} {variant:<9} {s['successes']:>3}/{s['trials']:<3} "
                     f"({100.0 * s['rate']:5.1f}%)  solve {s['solve_ms']:8.1f} ms  rollout {s['rollout_ms']:8.1f} ms")
    return lines


def report_json(report: RunReport, task: TaskSpec | None = None) -> str:
    return json.dumps(report.to_dict(task), indent=2, sort_keys=True)
