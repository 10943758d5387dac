"""Trace-tree indexing: step kinds, the state tree, stage spans, and the
three diagnosis artifacts (``steps.json``, ``stage_ranges.json``, ``tree.md``).

Tree rule: a cursor starts at the synthetic root. An exploration step hangs
under the cursor as a leaf; a state-changing step becomes a child of the
cursor and the cursor moves onto it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from runtrace import commands
from runtrace.commands import Category
from runtrace.model import (
    STAGE_RANGES_FILE,
    STEPS_FILE,
    TREE_FILE,
    StageLabel,
    StageSegmentation,
    StageSpan,
    StepKind,
    StepRecord,
    Trajectory,
    dump_json,
    read_json,
)

ROOT = 0
SUMMARY_WIDTH = 80


class LengthMismatch(ValueError):
    pass


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class TraceNode:
    step_id: int
    kind: StepKind
    parent: int  # ROOT or a step id
    depth: int
    summary: str


@dataclass(frozen=True)
class TraceTree:
    nodes: Mapping[int, TraceNode]

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes[k] for k in sorted(self.nodes))

    def parent(self, step_id: int) -> int:
        return self.nodes[step_id].parent

    def children(self, node_id: int) -> list[int]:
        return sorted(n.step_id for n in self.nodes.values() if n.parent == node_id)

    @property
    def kinds(self) -> list[StepKind]:
        return [n.kind for n in self]

    @property
    def current_state(self) -> int:
        """State node the cursor rests on after the last step."""
        changes = [n.step_id for n in self if n.kind is StepKind.CHANGE]
        return changes[-1] if changes else ROOT

    def state_level(self, step_id: int) -> int:
        """Number of state changes applied once ``step_id`` has run."""
        return sum(1 for n in self.nodes.values() if n.step_id <= step_id and n.kind is StepKind.CHANGE)


def classify_step(step: StepRecord) -> StepKind:
    return commands.kind_of(step.command)


def classify_steps(t: Trajectory) -> list[StepKind]:
    return [classify_step(s) for s in t.steps]


def outcome_tag(step: StepRecord) -> str:
    rc = step.returncode
    if rc is None:
        return "n/a"
    return "ok" if rc == 0 else "fail"


def summarize(step: StepRecord) -> str:
    line = " ".join(step.command.split())
    return f"{line[:SUMMARY_WIDTH]} [{outcome_tag(step)}]"


def build_tree(t: Trajectory, kinds: Sequence[StepKind]) -> TraceTree:
    if len(kinds) != len(t.steps):
        raise LengthMismatch(f"{len(kinds)} kinds for {len(t.steps)} steps")
    nodes: dict[int, TraceNode] = {}
    cursor, cursor_depth = ROOT, 0
    for step, kind in zip(t.steps, kinds):
        kind = StepKind(kind)
        nodes[step.step_id] = TraceNode(step.step_id, kind, cursor, cursor_depth + 1, summarize(step))
        if kind is StepKind.CHANGE:
            cursor, cursor_depth = step.step_id, cursor_depth + 1
    return TraceTree(nodes)


# ---------------------------------------------------------------------------
# stages


def stage_of(category: Category, kind: StepKind, patched_before: bool) -> StageLabel:
    if category is Category.INSTALL:
        return StageLabel.DEPENDENCY_INSTALLATION
    if kind is StepKind.CHANGE:
        return StageLabel.PATCHING
    if category is Category.PROBE:
        return StageLabel.ENVIRONMENT_VERIFICATION
    if category is Category.CHECK:
        return StageLabel.VERIFICATION if patched_before else StageLabel.INSPECTION_DEBUGGING
    return StageLabel.INSPECTION_DEBUGGING


def step_stages(t: Trajectory, kinds: Sequence[StepKind]) -> list[StageLabel]:
    labels = []
    patched = False
    for step, kind in zip(t.steps, kinds):
        label = stage_of(commands.categorize(step.command), StepKind(kind), patched)
        patched = patched or label is StageLabel.PATCHING
        labels.append(label)
    return labels


def merge_labels(labels: Sequence[StageLabel], first_id: int = 1) -> StageSegmentation:
    spans: list[StageSpan] = []
    for offset, label in enumerate(labels):
        sid = first_id + offset
        if spans and spans[-1].stage is label:
            spans[-1] = StageSpan(label, spans[-1].start, sid)
        else:
            spans.append(StageSpan(label, sid, sid))
    return StageSegmentation(tuple(spans))


def segment_stages(
    t: Trajectory, kinds: Sequence[StepKind], gold: StageSegmentation | None = None
) -> StageSegmentation:
    """Stage spans for ``t``; a gold segmentation, when given, is returned as-is."""
    if gold is not None:
        return gold
    if not t.steps:
        raise ValueError("cannot segment an empty trajectory")
    if len(kinds) != len(t.steps):
        raise LengthMismatch(f"{len(kinds)} kinds for {len(t.steps)} steps")
    return merge_labels(step_stages(t, kinds), t.steps[0].step_id)


# ---------------------------------------------------------------------------
# artifacts

_STEP_LINE = re.compile(r"^(?P<indent>(?:  )*)- \[step(?P<sid>\d+)\] \((?P<kind>explore|change)\) (?P<summary>.*)$")
_STAGE_LINE = re.compile(r"^<!-- stage (?P<idx>\d+): (?P<stage>[a-z_]+) \[(?P<start>\d+), (?P<end>\d+)\] -->$")
TREE_HEADER = "# Trace tree"


def render_tree(tree: TraceTree, seg: StageSegmentation) -> str:
    starts = {span.start: (i, span) for i, span in enumerate(seg.spans, 1)}
    lines = [TREE_HEADER, ""]
    for node in tree:
        if node.step_id in starts:
            i, span = starts[node.step_id]
            lines.append(f"<!-- stage {i}: {span.stage.value} [{span.start}, {span.end}] -->")
        lines.append(f"{'  ' * node.depth}- [step{node.step_id}] ({node.kind.value}) {node.summary}")
    return "\n".join(lines) + "\n"


def parse_tree(text: str) -> tuple[TraceTree, StageSegmentation]:
    """Inverse of :func:`render_tree`."""
    nodes: dict[int, TraceNode] = {}
    spans: list[StageSpan] = []
    # latest state node seen at each depth
    state_at: dict[int, int] = {0: ROOT}
    for line in text.splitlines():
        m = _STAGE_LINE.match(line)
        if m:
            spans.append(StageSpan(StageLabel(m["stage"]), int(m["start"]), int(m["end"])))
            continue
        m = _STEP_LINE.match(line)
        if not m:
            continue
        depth = len(m["indent"]) // 2
        sid, kind = int(m["sid"]), StepKind(m["kind"])
        parent = state_at.get(depth - 1, ROOT)
        nodes[sid] = TraceNode(sid, kind, parent, depth, m["summary"])
        if kind is StepKind.CHANGE:
            state_at[depth] = sid
    return TraceTree(nodes), StageSegmentation(tuple(spans))


def emit_artifacts(tree: TraceTree, seg: StageSegmentation, t: Trajectory, out_dir: Path) -> set[Path]:
    out_dir = Path(out_dir)
    files = {
        out_dir / STEPS_FILE: dump_json(t.steps_to_list()),
        out_dir / STAGE_RANGES_FILE: dump_json(seg.to_list()),
        out_dir / TREE_FILE: render_tree(tree, seg),
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for path, text in files.items():
            path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write artifacts to {out_dir}: {exc}") from exc
    return set(files)


def load_artifacts(index_dir: Path) -> tuple[list[dict], TraceTree, StageSegmentation]:
    """Read back what :func:`emit_artifacts` wrote."""
    index_dir = Path(index_dir)
    steps = read_json(index_dir / STEPS_FILE)
    tree, _ = parse_tree((index_dir / TREE_FILE).read_text(encoding="utf-8"))
    seg = StageSegmentation.from_list(read_json(index_dir / STAGE_RANGES_FILE))
    return steps, tree, seg


def index_trajectory(
    t: Trajectory, gold: StageSegmentation | None = None
) -> tuple[list[StepKind], TraceTree, StageSegmentation]:
    kinds = classify_steps(t)
    return kinds, build_tree(t, kinds), segment_stages(t, kinds, gold)
