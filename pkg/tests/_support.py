"""Small builders shared by the test modules."""

from __future__ import annotations

import json
from pathlib import Path

from runtrace.extraction import extract
from runtrace.model import TASK_FILE, Observation, Outcome, StepRecord, Trajectory, write_json
from runtrace.tree import emit_artifacts, index_trajectory

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"

EDIT = "str_replace_editor str_replace src/{mod}.py --old_str 'x' --new_str 'y'"
TEST = "python -m pytest tests/ -q"


def step(sid: int, command: str, rc: int | None = 0, output: str = "", tokens: int | None = 10,
         thought: str = "") -> StepRecord:
    obs = None if rc is None and not output else Observation(output, rc)
    return StepRecord(sid, command, thought, obs, tokens)


def trajectory(rows, outcome: Outcome = Outcome.UNSOLVED, task_id: str = "t1") -> Trajectory:
    """``rows`` are ``(command, rc)`` or ``(command, rc, output)`` tuples, numbered from 1."""
    steps = []
    for i, row in enumerate(rows, 1):
        cmd, rc, *rest = row
        steps.append(step(i, cmd, rc, rest[0] if rest else ""))
    return Trajectory(tuple(steps), task_id=task_id, outcome=outcome)


def golden_trajectory() -> Trajectory:
    return Trajectory(
        (
            StepRecord(1, "ls -la", "Look around the repository first.", Observation("README.md\nsrc\ntests", 0), 120),
            StepRecord(2, "str_replace_editor str_replace src/app.py --old_str 'a' --new_str 'b'", "Swap the constant.",
                       Observation("(1 lines changed)", 0), 340),
            StepRecord(3, "python -m pytest tests/ -q", "Run the tests.", Observation("1 failed, 4 passed", 1), 95),
        ),
        task_id="golden",
        outcome=Outcome.UNSOLVED,
    )


def write_index(t: Trajectory, out: Path, task: str = "Fix the failing test.\n", gold=None) -> Path:
    _kinds, tree, seg = index_trajectory(t, gold)
    emit_artifacts(tree, seg, t, out)
    (out / TASK_FILE).write_text(task, encoding="utf-8")
    write_json(out / "run_meta.json", t.meta_to_dict())
    return out


def index_run_dir(run_dir: Path, out: Path) -> Path:
    x = extract(run_dir)
    return write_index(x.trajectory, out)


# diagnosis commands, as a model would send them

INIT = """python -c 'open("mini_tracer_labels.json","w").write("[]")'"""


def inspect(step_id: int) -> str:
    return (
        """python3 -c 'import json; steps=json.load(open("steps.json","r",encoding="utf-8")); """
        f"""s=next(x for x in steps if x.get("step_id")=={step_id}); """
        """print(((s.get("action_ref") or {}).get("content") or "").strip())'"""
    )


def append_label(start: int, end: int, incorrect=(), unuseful=(), reasoning: str = "broke the build") -> str:
    obj = json.dumps({"stage_id": [start, end], "incorrect_step_ids": list(incorrect),
                      "unuseful_step_ids": list(unuseful), "reasoning": reasoning})
    return (
        """python -c 'import json; p="mini_tracer_labels.json"; labels=json.load(open(p,"r",encoding="utf-8")); """
        f"""labels.append({obj}); open(p,"w",encoding="utf-8").write(json.dumps(labels))'"""
    )


def write_raw(text: str) -> str:
    return f"""python -c 'open("mini_tracer_labels.json","w").write({json.dumps(text)})'"""
