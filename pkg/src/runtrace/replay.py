"""Reflective-replay hints: a text prefix describing the diagnosed failure,
plus the budget the replayed run must respect."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from runtrace.evaluation import token_account
from runtrace.model import (
    DiagnosisResult,
    Evidence,
    StageSegmentation,
    Trajectory,
    dump_json,
)

HINT_FILE = "replay_hint.txt"
BUDGET_FILE = "replay_budget.json"
MAX_EXCERPTS = 5
EXCERPT_CHARS = 200
HINT_CAP = 4000


class EmptyDiagnosis(ValueError):
    pass


@dataclass(frozen=True)
class ReplayBudget:
    max_iterations: int
    max_tokens: int
    tokens_estimated: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_iterations": self.max_iterations,
            "max_tokens": self.max_tokens,
            "tokens_estimated": self.tokens_estimated,
        }


@dataclass(frozen=True)
class ReplayPackage:
    hint: str
    budget: ReplayBudget
    # tokens spent producing the diagnosis; never part of the replay budget
    diagnosis_cost: int = 0

    def budget_dict(self) -> dict[str, Any]:
        return {**self.budget.to_dict(), "diagnosis_cost": self.diagnosis_cost}


def original_budget(t: Trajectory) -> ReplayBudget:
    account = token_account(t)
    return ReplayBudget(len(t.steps), account.total, account.estimated)


def _clip(text: str, limit: int) -> str:
    text = " ".join(text.split())
    return text if len(text) <= limit else text[: limit - 3] + "..."


def _excerpts(d: DiagnosisResult, t: Trajectory, limit: int) -> list[str]:
    given = {e.step_id: e.excerpt for e in d.evidence}
    lines = []
    for verdict in d.stages:
        tagged = [(sid, "incorrect") for sid in sorted(verdict.incorrect_step_ids)]
        tagged += [(sid, "unuseful") for sid in sorted(verdict.unuseful_step_ids)]
        for sid, tag in sorted(tagged):
            text = given.get(sid)
            if text is None:
                try:
                    step = t.step(sid)
                except KeyError:
                    continue
                text = f"$ {step.command}"
            lines.append(f"- step {sid} ({tag}): {_clip(text, EXCERPT_CHARS)}")
    return lines[:limit]


def _assemble(head: list[str], excerpts: list[str], reasoning: str, tail: list[str]) -> str:
    body = head + ["", "Error-relevant steps:"] + (excerpts or ["- (none listed)"])
    body += ["", "Why:", reasoning or "(no reasoning recorded)", ""] + tail
    return "\n".join(body) + "\n"


def render_hint(
    d: DiagnosisResult,
    task_text: str,
    t: Trajectory,
    seg: StageSegmentation | None = None,
    diagnosis_cost: int = 0,
    max_excerpts: int = MAX_EXCERPTS,
    cap: int = HINT_CAP,
) -> ReplayPackage:
    """Deterministic hint text for a non-empty diagnosis.

    When the hint would exceed ``cap`` characters, excerpts are dropped from
    the end first; only then is the reasoning shortened.
    """
    if d.is_empty:
        raise EmptyDiagnosis("nothing to replay: the diagnosis has no stages")
    verdict = d.failure_stage
    start, end = verdict.stage_id
    label = "unlabeled stage"
    if seg is not None:
        span = seg.find((start, end))
        if span is not None:
            label = span.stage.value
    first_line = next((ln.strip("# ").strip() for ln in task_text.splitlines() if ln.strip()), "")
    head = [
        f"Replay hint for task {t.task_id or '(unnamed)'}",
        f"Task: {_clip(first_line, EXCERPT_CHARS) or '(see the original task statement)'}",
        f"The earlier attempt went wrong in the {label} stage, steps {start} to {end}.",
    ]
    critical = min(verdict.incorrect_step_ids) if verdict.incorrect_step_ids else start
    tail = [
        "Suggested correction:",
        f"Do not repeat the approach taken at step {critical}; re-check its assumptions before changing state again.",
    ]
    excerpts = _excerpts(d, t, max_excerpts)
    reasoning = " ".join(v.reasoning.strip() for v in d.stages if v.reasoning.strip())
    hint = _assemble(head, excerpts, reasoning, tail)
    while len(hint) > cap and excerpts:
        excerpts = excerpts[:-1]
        hint = _assemble(head, excerpts, reasoning, tail)
    if len(hint) > cap:
        room = max(0, len(reasoning) - (len(hint) - cap) - 3)
        reasoning = reasoning[:room] + "..."
        hint = _assemble(head, excerpts, reasoning, tail)
    if len(hint) > cap:
        hint = hint[:cap]
    return ReplayPackage(hint, original_budget(t), diagnosis_cost)


def write_replay(pkg: ReplayPackage, out_dir: Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    hint_path, budget_path = out_dir / HINT_FILE, out_dir / BUDGET_FILE
    hint_path.write_text(pkg.hint, encoding="utf-8")
    budget_path.write_text(dump_json(pkg.budget_dict()), encoding="utf-8")
    return hint_path, budget_path


__all__ = ["EmptyDiagnosis", "Evidence", "ReplayBudget", "ReplayPackage", "render_hint", "write_replay"]
