from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from _support import EDIT, GOLDEN, TEST, golden_trajectory, trajectory
from runtrace.model import StageLabel, StageSegmentation, StageSpan, StepKind, StepRecord, Trajectory
from runtrace.tree import (
    ROOT,
    LengthMismatch,
    build_tree,
    classify_steps,
    emit_artifacts,
    index_trajectory,
    load_artifacts,
    parse_tree,
    render_tree,
    segment_stages,
)

E, C = StepKind.EXPLORE, StepKind.CHANGE
EV, DI, ID, P, V = (StageLabel.ENVIRONMENT_VERIFICATION, StageLabel.DEPENDENCY_INSTALLATION,
                    StageLabel.INSPECTION_DEBUGGING, StageLabel.PATCHING, StageLabel.VERIFICATION)


def _plain(n: int) -> Trajectory:
    return Trajectory(tuple(StepRecord(i, f"cmd {i}") for i in range(1, n + 1)))


def oracle(kinds):
    """Parents and depths straight from the state rule, without a cursor."""
    parents, depths, last_change = [], [], ROOT
    for i, k in enumerate(kinds, 1):
        parents.append(last_change)
        depths.append(1 + sum(1 for x in kinds[: i - 1] if x is C))
        if k is C:
            last_change = i
    return parents, depths


def test_worked_example():
    tree = build_tree(_plain(5), [E, E, C, E, C])
    assert [n.parent for n in tree] == [0, 0, 0, 3, 3]
    assert [n.depth for n in tree] == [1, 1, 1, 2, 2]
    assert tree.children(ROOT) == [1, 2, 3]
    assert tree.current_state == 5


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        build_tree(_plain(3), [E, C])


@given(st.lists(st.sampled_from([E, C]), min_size=1, max_size=60))
def test_matches_oracle(kinds):
    tree = build_tree(_plain(len(kinds)), kinds)
    parents, depths = oracle(kinds)
    assert [n.parent for n in tree] == parents
    assert [n.depth for n in tree] == depths
    for node in tree:
        assert node.parent < node.step_id
        if node.kind is E:
            assert tree.children(node.step_id) == []


def test_golden_rendering_and_files(tmp_path):
    t = golden_trajectory()
    kinds, tree, seg = index_trajectory(t)
    assert kinds == [E, C, E]
    assert [n.depth for n in tree] == [1, 1, 2]
    emit_artifacts(tree, seg, t, tmp_path)
    for name in ("steps.json", "stage_ranges.json", "tree.md"):
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes(), name


def test_render_parse_round_trip():
    t = trajectory([("ls", 0), (EDIT.format(mod="a"), 0), (TEST, 1), (EDIT.format(mod="b"), 0), ("cat x", 0)])
    kinds, tree, seg = index_trajectory(t)
    back_tree, back_seg = parse_tree(render_tree(tree, seg))
    assert back_seg == seg
    assert [(n.step_id, n.kind, n.parent, n.depth, n.summary) for n in back_tree] == \
           [(n.step_id, n.kind, n.parent, n.depth, n.summary) for n in tree]


def test_load_artifacts(tmp_path):
    t = golden_trajectory()
    _, tree, seg = index_trajectory(t)
    emit_artifacts(tree, seg, t, tmp_path)
    steps, tree2, seg2 = load_artifacts(tmp_path)
    assert steps == json.loads((GOLDEN / "steps.json").read_text())
    assert seg2 == seg and tree2.kinds == tree.kinds


def test_stage_rules():
    t = trajectory([
        ("which python", 0),            # probe -> EV
        ("pip install attrs", 0),       # install -> DI
        (TEST, 1),                      # check before any patch -> ID
        ("cat src/a.py", 0),            # read -> ID
        (EDIT.format(mod="a"), 0),      # change -> P
        (TEST, 0),                      # check after patch -> V
        ("grep -n x src", 0),           # read -> ID
    ])
    seg = segment_stages(t, classify_steps(t))
    assert [(s.stage, s.start, s.end) for s in seg] == [
        (EV, 1, 1), (DI, 2, 2), (ID, 3, 4), (P, 5, 5), (V, 6, 6), (ID, 7, 7)
    ]
    assert seg.problems(len(t.steps)) == []


def test_gold_segmentation_wins():
    t = trajectory([("ls", 0), (EDIT.format(mod="a"), 0), (TEST, 0)])
    gold = StageSegmentation((StageSpan(ID, 1, 2), StageSpan(V, 3, 3)))
    assert segment_stages(t, classify_steps(t), gold) == gold


@given(st.lists(st.sampled_from(["ls", "which gcc", "pip install six", EDIT.format(mod="m"), TEST]), min_size=1, max_size=40))
def test_segmentation_tiles_the_run(cmds):
    t = trajectory([(c, 0) for c in cmds])
    seg = segment_stages(t, classify_steps(t))
    assert seg.problems(len(cmds)) == []
    labels = [s.stage for s in seg]
    assert all(a != b for a, b in zip(labels, labels[1:]))
