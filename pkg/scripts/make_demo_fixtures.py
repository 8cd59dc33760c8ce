"""Regenerate the bundled demo, scene and eval-config fixtures."""
from __future__ import annotations

import json
from pathlib import Path

from contact_retarget.retarget import save_demo
from contact_retarget.scene import Scene, Wall, save_scene
from contact_retarget.templates import DEMOS, STANDARD_OBJECTS, TASKS

DATA = Path(__file__).resolve().parents[1] / "src" / "contact_retarget" / "data"


def main() -> None:
    (DATA / "demos").mkdir(parents=True, exist_ok=True)
    (DATA / "scenes").mkdir(parents=True, exist_ok=True)
    for name, make in DEMOS.items():
        save_demo(make(), DATA / "demos" / f"{name}.json")
    save_scene(Scene(Wall(0.75, 0.0)), DATA / "scenes" / "wall_075.json")
    save_scene(Scene(Wall(0.80, 0.0)), DATA / "scenes" / "wall_080.json")
    save_scene(Scene(Wall(0.78, 8.0)), DATA / "scenes" / "wall_078_yaw8.json")
    conf = {"tasks": list(TASKS), "objects": list(STANDARD_OBJECTS), "seeds": 5, "variants": ["retarget", "ablate"]}
    (DATA / "eval.json").write_text(json.dumps(conf, indent=2) + "\n")
    for p in sorted(DATA.rglob("*.json")):
        print(p.relative_to(DATA))


if __name__ == "__main__":
    main()
