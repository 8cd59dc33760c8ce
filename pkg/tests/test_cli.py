import json
import math
import subprocess
import sys

import pytest

from contact_retarget.cli import DATA_DIR, run
from contact_retarget.contact import pivot_pose
from contact_retarget.primitives import PrimitiveKind as K
from contact_retarget.retarget import Demo, Keyframe, save_demo
from contact_retarget.scene import Scene, Wall
from contact_retarget.templates import against_wall, demo_object, flat_pose

DEMO = str(DATA_DIR / "demos" / "grasping.json")
WALL_080 = str(DATA_DIR / "scenes" / "wall_080.json")
KEYS = {"command", "exit_code", "ok", "error", "result"}


def jrun(argv, capsys):
    code, payload = run([*argv, "--json"])
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1
    parsed = json.loads(out[0])
    assert set(parsed) == KEYS
    assert parsed["exit_code"] == code
    assert parsed["ok"] == (code == 0)
    return code, parsed


@pytest.fixture(scope="module")
def grasp_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code, _ = run(["run", "--demo", DEMO, "--scene", WALL_080, "--object", "cracker",
                   "--x0", "0.45,0", "--out", str(out)])
    return code, out


class TestValidate:
    @pytest.mark.parametrize("name", ["grasping", "avoidance", "storage", "retrieval", "pivot-grasp",
                                      "short-grasping"])
    def test_bundled(self, name, capsys):
        code, p = jrun(["validate", str(DATA_DIR / "demos" / f"{name}.json")], capsys)
        assert code == 0 and p["result"]["ok"]

    def test_truncated(self, tmp_path, capsys):
        text = open(DEMO).read()
        bad = tmp_path / "t.json"
        bad.write_text(text[: len(text) // 2])
        code, p = jrun(["validate", str(bad)], capsys)
        assert code == 2 and p["error"]

    def test_missing_file(self, tmp_path, capsys):
        code, _ = jrun(["validate", str(tmp_path / "nope.json")], capsys)
        assert code == 2

    def test_failing_switch(self, tmp_path, capsys):
        obj = demo_object()
        scene = Scene(Wall(0.75, 0.0))
        x1 = against_wall(obj, scene, gap=0.03)
        x2 = pivot_pose(against_wall(obj, scene), obj, scene, 0.5 * math.pi)
        frames = [Keyframe(float(i), p) for i, p in enumerate((flat_pose(obj, 0.45, 0.0), x1, x2))]
        path = tmp_path / "bad.json"
        save_demo(Demo(scene, obj, frames, (K.PUSH, K.PIVOT, K.GRASP), (1, 2), x2), path)
        code, p = jrun(["validate", str(path)], capsys)
        assert code == 1
        sw = p["result"]["switches"][0]
        assert not sw["ok"] and sw["residual"] == pytest.approx(0.03, abs=1e-6)
        code, _ = run(["validate", str(path)])
        assert code == 1
        assert "0.03" in capsys.readouterr().out


class TestRun:
    def test_success(self, grasp_out):
        code, out = grasp_out
        assert code == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["success"] is True
        lines = (out / "trajectory.jsonl").read_text().splitlines()
        assert "header" in json.loads(lines[0])
        assert len(lines) > 100

    def test_ablated_offset_wall(self, tmp_path, capsys):
        code, p = jrun(["run", "--demo", DEMO, "--scene", WALL_080, "--object", "cracker", "--x0", "0.45,0",
                        "--ablate-retarget-x", "--out", str(tmp_path)], capsys)
        assert code == 1
        assert p["error"] == "precondition: wall"

    def test_not_freestanding(self, tmp_path, capsys):
        code, p = jrun(["run", "--demo", DEMO, "--scene", WALL_080, "--object", "cracker", "--x0", "0.75,0",
                        "--out", str(tmp_path)], capsys)
        assert code == 3 and "freestanding" in p["error"]

    def test_retarget_prints_goals(self, capsys):
        code, p = jrun(["retarget", "--task", "grasping", "--seed", "1"], capsys)
        assert code == 0
        assert len(p["result"]["goals"]) == 3

    def test_bad_object(self, tmp_path, capsys):
        code, _ = jrun(["run", "--task", "grasping", "--object", "1,2", "--out", str(tmp_path)], capsys)
        assert code == 2


class TestEval:
    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"tasks": ["juggling"]}))
        code, _ = jrun(["eval", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 2
        cfg.write_text(json.dumps({"tasks": ["grasping"], "colour": 1}))
        code, _ = jrun(["eval", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 2

    def test_empty_variants(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"tasks": ["avoidance"], "objects": ["cracker"], "seeds": 1, "variants": []}))
        code, _ = jrun(["eval", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 0
        assert (tmp_path / "eval.csv").read_text().count("\n") == 1

    def test_single_template(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"tasks": ["avoidance"], "objects": ["cracker"], "seeds": 1,
                                   "variants": ["retarget"]}))
        code, p = jrun(["eval", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 0
        run(["eval", str(cfg), "--out", str(tmp_path)])
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
        assert len(lines) == 1 and lines[0].startswith("avoidance")

    def test_seed_changes_scene(self, tmp_path, capsys):
        a = jrun(["retarget", "--task", "grasping", "--seed", "0"], capsys)[1]
        b = jrun(["retarget", "--task", "grasping", "--seed", "1"], capsys)[1]
        assert set(a["result"]) == set(b["result"])
        assert a["result"]["goals"] != b["result"]["goals"]


class TestPlot:
    def test_grasp_plot(self, grasp_out, tmp_path, capsys):
        _, out = grasp_out
        traj = str(out / "trajectory.jsonl")
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert jrun(["plot", traj, "--out", str(d1)], capsys)[0] == 0
        assert jrun(["plot", traj, "--out", str(d2)], capsys)[0] == 0
        for view in ("top", "side"):
            a = (d1 / f"trajectory_{view}.svg").read_bytes()
            assert a == (d2 / f"trajectory_{view}.svg").read_bytes()
            assert a.count(b'class="object"') >= 4
            assert a.count(b'class="goal"') == 3

    def test_empty_trajectory(self, tmp_path, capsys):
        (tmp_path / "e.jsonl").write_text("")
        assert jrun(["plot", str(tmp_path / "e.jsonl"), "--out", str(tmp_path)], capsys)[0] == 0
        svg = (tmp_path / "trajectory_top.svg").read_text()
        assert "<svg" in svg and 'class="object"' not in svg

    def test_unreadable(self, tmp_path, capsys):
        (tmp_path / "x.jsonl").write_text("{not json\n")
        assert jrun(["plot", str(tmp_path / "x.jsonl"), "--out", str(tmp_path)], capsys)[0] == 2
        assert jrun(["plot", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)], capsys)[0] == 2


def test_bad_arguments(capsys):
    code, p = jrun(["frobnicate"], capsys)
    assert code == 2 and p["command"] is None


def test_console_script_module():
    r = subprocess.run([sys.executable, "-m", "contact_retarget.cli", "validate", DEMO, "--json"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["ok"] is True
