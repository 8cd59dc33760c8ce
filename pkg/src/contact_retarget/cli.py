"""``contact-retarget`` command line.

Exit codes: 0 success, 1 task failure, 2 input error, 3 infeasible.  With
``--json`` every exit path prints exactly one JSON object to stdout with the
keys of ``JSON_KEYS``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ContactRetargetError, Infeasible, InvalidScene, MissingWall, ParseError, SchemaError
from .geometry import Pose
from .pipeline import (
    MAX_STEPS,
    VARIANTS,
    compose_policy,
    evaluate,
    rows_to_csv,
    summarize,
    summary_lines,
    validate_demo,
)
from .retarget import RetargetConfig, build_goal_sequence, load_demo, object_from_dict
from .scene import ObjectModel, load_json, load_scene
from .templates import SHORT_OBJECTS, STANDARD_OBJECTS, TASK_BUILDERS, TaskSpec, make_task, object_model, task_batch

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3
JSON_KEYS = ("command", "exit_code", "ok", "error", "result")
DATA_DIR = Path(__file__).parent / "data"
ALL_OBJECTS = {**STANDARD_OBJECTS, **SHORT_OBJECTS}


class InputError(ContactRetargetError):
    """Bad command-line input; maps to exit code 2."""


@dataclass
class CliConfig:
    subcommand: str
    inputs: list[str] = field(default_factory=list)
    out: Path = Path(".")
    seed: int = 0
    ablate: bool = False
    tol: float | None = None
    max_steps: int = MAX_STEPS
    json: bool = False

    def retarget_config(self) -> RetargetConfig:
        cfg = RetargetConfig()
        return cfg if self.tol is None else replace(cfg, pos_radius=self.tol)


@dataclass
class Outcome:
    code: int
    result: dict = field(default_factory=dict)
    error: str | None = None
    lines: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# argument helpers

def parse_object(spec: str) -> ObjectModel:
    """Bundled object name, JSON file ``{name, half_extents}``, or ``a,b,c`` half-extents."""
    if spec in ALL_OBJECTS:
        return object_model(spec)
    if spec.endswith(".json"):
        return object_from_dict(load_json(spec))
    try:
        he = [float(v) for v in spec.split(",")]
    except ValueError:
        raise InputError(f"unknown object {spec!r}") from None
    if len(he) != 3:
        raise InputError("object half-extents need three values")
    try:
        return ObjectModel.from_half_extents("custom", he)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def parse_x0(spec: str, obj: ObjectModel) -> Pose:
    """``x,y[,yaw_deg]``: a flat pose resting on the ground."""
    try:
        v = [float(s) for s in spec.split(",")]
    except ValueError:
        raise InputError(f"bad --x0 {spec!r}") from None
    if len(v) not in (2, 3) or not all(math.isfinite(a) for a in v):
        raise InputError("--x0 expects x,y or x,y,yaw_deg")
    yaw = math.radians(v[2]) if len(v) == 3 else 0.0
    return Pose.from_xyz_yaw(v[0], v[1], float(obj.half_extents[2]), yaw)


def build_task(args: argparse.Namespace) -> TaskSpec:
    if args.task:
        if args.task not in TASK_BUILDERS:
            raise InputError(f"unknown task {args.task!r}")
        obj = parse_object(args.object or "cracker")
        return make_task(args.task, obj, args.seed)
    if not (args.demo and args.object and args.x0):
        raise InputError("need --task, or --demo with --object and --x0")
    demo = load_demo(args.demo)
    scene = load_scene(args.scene) if args.scene else demo.scene
    obj = parse_object(args.object)
    return TaskSpec(scene, obj, parse_x0(args.x0, obj), demo, None, Path(args.demo).stem, args.seed)


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(cfg: CliConfig) -> Outcome:
    demo = load_demo(cfg.inputs[0])
    rep = validate_demo(demo)
    lines = [f"switch {c.index}: {'ok' if c.ok else 'FAIL'}  freestanding={c.freestanding}  "
             f"residual={c.residual:.4f}" + (f"  unmet={c.unmet}" if c.unmet else "") for c in rep.checks]
    return Outcome(EXIT_OK if rep.ok else EXIT_FAIL, rep.to_dict(), None if rep.ok else "demo check failed", lines)


def cmd_retarget(cfg: CliConfig, task: TaskSpec) -> Outcome:
    seq = build_goal_sequence(task.demo, task.scene, task.object, task.x0, task.final_goal,
                              cfg.retarget_config(), not cfg.ablate)
    goals = [g.to_dict() for g in seq.goals]
    lines = [f"goal {i} ({k.value}): " + " ".join(f"{v:+.4f}" for v in g["position"])
             for i, (k, g) in enumerate(zip(task.demo.labels, goals))]
    return Outcome(EXIT_OK, {"task": task.name, "retargeted": seq.retargeted, "goals": goals}, None, lines)


def cmd_run(cfg: CliConfig, task: TaskSpec) -> Outcome:
    rep = compose_policy(task, cfg.retarget_config(), cfg.max_steps, retarget=not cfg.ablate)
    cfg.out.mkdir(parents=True, exist_ok=True)
    traj = cfg.out / "trajectory.jsonl"
    with open(traj, "w") as fh:
        for r in rep.trajectory_records(task):
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    d = rep.to_dict(task)
    (cfg.out / "report.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    d = {**d, "trajectory": str(traj), "report": str(cfg.out / "report.json")}
    lines = [f"{p.kind.value:<6} {p.outcome:<12} steps={p.steps}" + (f"  {p.reason}" if p.reason else "")
             for p in rep.primitives]
    lines.append("success" if rep.success else f"failure: {rep.failure_reason}")
    return Outcome(EXIT_OK if rep.success else EXIT_FAIL, d, None if rep.success else rep.failure_reason, lines)


def _list(v, what: str, cast=str) -> list:
    if not isinstance(v, list):
        raise SchemaError(f"eval config: {what} must be a list")
    try:
        return [cast(a) for a in v]
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"eval config: {what}: {exc}") from None


def load_eval_config(path) -> dict:
    """``{tasks, objects, seeds, variants}``; ``seeds`` is a list or a count."""
    d = load_json(path)
    if not isinstance(d, dict):
        raise SchemaError("eval config: expected an object")
    extra = set(d) - {"tasks", "objects", "seeds", "variants"}
    if extra:
        raise SchemaError(f"eval config: unknown keys {sorted(extra)}")
    tasks = _list(d.get("tasks", list(TASK_BUILDERS)[:4]), "tasks")
    objects = _list(d.get("objects", list(STANDARD_OBJECTS)), "objects")
    seeds = d.get("seeds", 5)
    seeds = list(range(seeds)) if isinstance(seeds, int) and not isinstance(seeds, bool) else _list(seeds, "seeds", int)
    variants = _list(d.get("variants", list(VARIANTS)), "variants")
    for t in tasks:
        if t not in TASK_BUILDERS:
            raise SchemaError(f"eval config: unknown task {t!r}")
    for o in objects:
        if o not in ALL_OBJECTS:
            raise SchemaError(f"eval config: unknown object {o!r}")
    for v in variants:
        if v not in VARIANTS:
            raise SchemaError(f"eval config: unknown variant {v!r}")
    if not tasks or not objects or not seeds:
        raise SchemaError("eval config: tasks, objects and seeds must be non-empty")
    return {"tasks": tasks, "objects": objects, "seeds": seeds, "variants": variants}


def cmd_eval(cfg: CliConfig) -> Outcome:
    conf = load_eval_config(cfg.inputs[0])
    seeds = [cfg.seed + s for s in conf["seeds"]]
    batch = task_batch(conf["tasks"], conf["objects"], seeds) if conf["variants"] else []
    rows = evaluate(batch, conf["variants"], cfg.retarget_config(), cfg.max_steps)
    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / "eval.csv"
    csv_path.write_text(rows_to_csv(rows))
    summary = {f"{t}/{v}": {k: s[k] for k in ("trials", "successes", "rate", "solve_ms", "rollout_ms", "failures")}
               for (t, v), s in sorted(summarize(rows).items())}
    return Outcome(EXIT_OK, {"csv": str(csv_path), "rows": len(rows), "summary": summary}, None, summary_lines(rows))


def cmd_plot(cfg: CliConfig) -> Outcome:
    from .plot import render
    from .sim import load_jsonl

    try:
        records = load_jsonl(cfg.inputs[0])
        svgs = render(records)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"unreadable trajectory: {exc}") from None
    cfg.out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for view, text in svgs.items():
        p = cfg.out / f"trajectory_{view}.svg"
        p.write_text(text)
        paths[view] = str(p)
    return Outcome(EXIT_OK, {"svgs": paths}, None, [f"wrote {p}" for p in paths.values()])


# ---------------------------------------------------------------------------
# entry point

def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="scene randomization seed (default 0)")
    common.add_argument("--json", action="store_true", help="print one JSON object to stdout")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--ablate-retarget-x", action="store_true", help="use remapped poses directly as goals")
    common.add_argument("--tol", type=float, default=None, metavar="METERS", help="goal position radius")
    common.add_argument("--max-steps", type=int, default=MAX_STEPS, metavar="N", help="step cap per primitive")

    p = argparse.ArgumentParser(prog="contact-retarget",
                                description="Retarget a manipulation demo to new scenes and objects.")
    sub = p.add_subparsers(dest="subcommand", required=True)
    v = sub.add_parser("validate", parents=[common], help="check a demo's contact switches")
    v.add_argument("demo")
    for name, text in (("retarget", "print the retargeted goal sequence"), ("run", "run a task in simulation")):
        r = sub.add_parser(name, parents=[common], help=text)
        r.add_argument("--task", choices=sorted(TASK_BUILDERS))
        r.add_argument("--demo")
        r.add_argument("--scene")
        r.add_argument("--object", help="bundled name, JSON file, or a,b,c half-extents")
        r.add_argument("--x0", help="x,y[,yaw_deg] of the flat start pose")
    e = sub.add_parser("eval", parents=[common], help="batch evaluation from a config file")
    e.add_argument("config")
    pl = sub.add_parser("plot", parents=[common], help="top and side SVGs of a trajectory")
    pl.add_argument("trajectory")
    return p


def _dispatch(cfg: CliConfig, args: argparse.Namespace) -> Outcome:
    if cfg.tol is not None and not (cfg.tol > 0):
        raise InputError("--tol must be positive")
    if cfg.max_steps < 1:
        raise InputError("--max-steps must be at least 1")
    if cfg.subcommand == "validate":
        return cmd_validate(cfg)
    if cfg.subcommand in ("retarget", "run"):
        task = build_task(args)
        return (cmd_retarget if cfg.subcommand == "retarget" else cmd_run)(cfg, task)
    if cfg.subcommand == "eval":
        return cmd_eval(cfg)
    return cmd_plot(cfg)


def run(argv: list[str] | None = None) -> tuple[int, dict]:
    """Run the command line and return ``(exit_code, json_payload)``."""
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = EXIT_INPUT if exc.code else EXIT_OK
        payload = {"command": None, "exit_code": code, "ok": code == 0,
                   "error": "bad arguments" if code else None, "result": {}}
        if "--json" in (sys.argv[1:] if argv is None else argv):
            print(json.dumps(payload, sort_keys=True))
        return code, payload
    inputs = [getattr(args, k) for k in ("demo", "config", "trajectory") if getattr(args, k, None)]
    cfg = CliConfig(args.subcommand, inputs, Path(args.out), args.seed, args.ablate_retarget_x, args.tol,
                    args.max_steps, args.json)
    try:
        out = _dispatch(cfg, args)
    except Infeasible as exc:
        out = Outcome(EXIT_INFEASIBLE, {"index": exc.index}, f"infeasible: {exc}")
    except (ParseError, InvalidScene, MissingWall, InputError, OSError, KeyError, TypeError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        out = Outcome(EXIT_INPUT, {}, f"input error: {msg}")
    payload = {"command": cfg.subcommand, "exit_code": out.code, "ok": out.code == EXIT_OK,
               "error": out.error, "result": out.result}
    if cfg.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in out.lines:
            print(line)
        if out.error and (out.code != EXIT_FAIL or not out.lines):
            print(out.error, file=sys.stderr)
    return out.code, payload


def main(argv: list[str] | None = None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
