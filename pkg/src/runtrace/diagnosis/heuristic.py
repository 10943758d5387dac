"""Deterministic diagnoser built from per-stage scoring features.

Each stage span gets four features: whether its state changes turned a
passing check into a failing one, how many lines it changed, how often
later stages went back to the same files or packages, and how
change-heavy it was. A weighted sum ranks the spans; the top span (earliest
on ties) is reported, with its failing state changes as ``incorrect`` and
its repeated explorations as ``unuseful``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from runtrace import commands
from runtrace.diagnosis.session import excerpt
from runtrace.model import (
    DiagnosisResult,
    Evidence,
    StageSegmentation,
    StageSpan,
    StageVerdict,
    StepKind,
    Trajectory,
)
from runtrace.tree import TraceTree


@dataclass(frozen=True)
class HeuristicWeights:
    regression: float = 4.0
    diff: float = 1.0
    backtrack: float = 2.0
    ratio: float = 0.5
    # lines changed at which the diff feature reaches half its weight
    diff_scale: float = 20.0

    def to_dict(self) -> dict[str, float]:
        return {
            "regression": self.regression,
            "diff": self.diff,
            "backtrack": self.backtrack,
            "ratio": self.ratio,
            "diff_scale": self.diff_scale,
        }


DEFAULT_WEIGHTS = HeuristicWeights()


@dataclass(frozen=True)
class StageScore:
    verification_regression: bool
    diff_magnitude: int
    backtrack_frequency: int
    exploration_to_action_ratio: float
    composite: float

    def to_dict(self) -> dict[str, object]:
        return {
            "verification_regression": self.verification_regression,
            "diff_magnitude": self.diff_magnitude,
            "backtrack_frequency": self.backtrack_frequency,
            "exploration_to_action_ratio": self.exploration_to_action_ratio,
            "composite": self.composite,
        }


def _norm(command: str) -> str:
    return " ".join(command.split())


def composite_score(regression: bool, diff: int, backtracks: int, ratio: float, w: HeuristicWeights) -> float:
    diff_term = diff / (diff + w.diff_scale) if diff > 0 else 0.0
    return w.regression * float(regression) + w.diff * diff_term + w.backtrack * backtracks + w.ratio * (1.0 - ratio)


def _regression(span: StageSpan, t: Trajectory, kinds: Sequence[StepKind]) -> bool:
    change_ids = [s.step_id for s, k in zip(t.steps, kinds) if k is StepKind.CHANGE]
    inside = [sid for sid in change_ids if sid in span]
    if not inside:
        return False
    first, last = inside[0], inside[-1]
    runs: dict[str, list[tuple[int, bool | None]]] = {}
    for step, kind in zip(t.steps, kinds):
        if kind is StepKind.EXPLORE and commands.is_check(step.command):
            runs.setdefault(_norm(step.command), []).append((step.step_id, commands.check_passed(step.observation)))
    outside = [sid for sid in change_ids if sid not in span]
    for history in runs.values():
        before = [r for r in history if r[0] < first]
        after = [r for r in history if r[0] > last]
        if not before or not after or before[-1][1] is not True or after[0][1] is not False:
            continue
        lo, hi = before[-1][0], after[0][0]
        if not any(lo < sid < hi for sid in outside):
            return True
    return False


def score_stage(
    span: StageSpan,
    t: Trajectory,
    tree: TraceTree,
    kinds: Sequence[StepKind],
    seg: StageSegmentation | None = None,
    weights: HeuristicWeights = DEFAULT_WEIGHTS,
) -> StageScore:
    """Features of one span. ``seg`` supplies the later spans for backtrack counting."""
    in_span = [(s, k) for s, k in zip(t.steps, kinds) if s.step_id in span]
    changes = [s for s, k in in_span if k is StepKind.CHANGE]
    diff = sum(commands.lines_changed(s.output) for s in changes)
    touched = frozenset().union(*(commands.targets(s.command) for s in changes)) if changes else frozenset()
    backtracks = 0
    if touched and seg is not None:
        for later in seg.spans:
            if later.start <= span.end:
                continue
            if any(
                k is StepKind.CHANGE and commands.targets(s.command) & touched
                for s, k in zip(t.steps, kinds)
                if s.step_id in later
            ):
                backtracks += 1
    ratio = len(changes) / len(in_span) if in_span else 0.0
    regression = _regression(span, t, kinds)
    return StageScore(regression, diff, backtracks, ratio, composite_score(regression, diff, backtracks, ratio, weights))


def redundant_steps(t: Trajectory, tree: TraceTree, kinds: Sequence[StepKind]) -> frozenset[int]:
    """Explorations that repeat an earlier command issued from the same state."""
    seen: set[tuple[int, str]] = set()
    out = set()
    for step, kind in zip(t.steps, kinds):
        if kind is not StepKind.EXPLORE:
            continue
        key = (tree.parent(step.step_id), _norm(step.command))
        if key in seen:
            out.add(step.step_id)
        seen.add(key)
    return frozenset(out)


def pick_stage(scores: Sequence[float]) -> int:
    """Index of the highest score; the earliest wins ties."""
    best = 0
    for i, value in enumerate(scores):
        if value > scores[best]:
            best = i
    return best


def heuristic_diagnose(
    t: Trajectory,
    tree: TraceTree,
    seg: StageSegmentation,
    kinds: Sequence[StepKind],
    weights: HeuristicWeights = DEFAULT_WEIGHTS,
) -> DiagnosisResult:
    if not seg.spans or not any(commands.observation_failed(s.observation) for s in t.steps):
        return DiagnosisResult()
    scores = [score_stage(span, t, tree, kinds, seg, weights) for span in seg.spans]
    span = seg.spans[pick_stage([s.composite for s in scores])]
    score = scores[seg.spans.index(span)]
    redundant = redundant_steps(t, tree, kinds)
    incorrect, unuseful = set(), set()
    for step, kind in zip(t.steps, kinds):
        if step.step_id not in span:
            continue
        if kind is StepKind.CHANGE and commands.observation_failed(step.observation):
            incorrect.add(step.step_id)
        elif kind is StepKind.EXPLORE and step.step_id in redundant:
            unuseful.add(step.step_id)
    if not incorrect and score.verification_regression:
        # every change "succeeded" but the check still regressed: blame the last one
        incorrect.add(max(s.step_id for s, k in zip(t.steps, kinds) if k is StepKind.CHANGE and s.step_id in span))
    reasoning = (
        f"{span.stage.value} span [{span.start}, {span.end}] ranks highest "
        f"(composite {score.composite:.3f}; regression={score.verification_regression}, "
        f"lines changed={score.diff_magnitude}, revisited by {score.backtrack_frequency} later spans, "
        f"change ratio={score.exploration_to_action_ratio:.2f})."
    )
    verdict = StageVerdict((span.start, span.end), frozenset(incorrect), frozenset(unuseful), reasoning)
    evidence = tuple(Evidence(sid, excerpt(t.step(sid).to_dict())) for sid in sorted(verdict.step_ids))
    return DiagnosisResult(stages=(verdict,), evidence=evidence)
