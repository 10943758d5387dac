"""Shared domain types for normalized agent trajectories and their labels.

Everything here is an immutable value. The on-disk encodings live next to
the types (``to_dict``/``from_dict``) so every module reads and writes the
same key names:

* ``steps.json``          -- array of ``{"step_id", "action_ref", "observation_ref"}``
* ``run_meta.json``       -- task/framework/backbone ids, outcome and run flags
* ``stage_ranges.json``   -- array of ``{"stage", "start_step_id", "end_step_id"}``
* ``mini_tracer_labels.json`` -- array of stage verdict objects
* ``gold_labels.json``    -- stage verdicts plus ``error_critical_step``/``error_type``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

STEPS_FILE = "steps.json"
META_FILE = "run_meta.json"
STAGE_RANGES_FILE = "stage_ranges.json"
TREE_FILE = "tree.md"
TASK_FILE = "task.md"
LABELS_FILE = "mini_tracer_labels.json"
GOLD_FILE = "gold_labels.json"
RUN_FLAGS_FILE = "run_flags.json"


class Outcome(str, Enum):
    SOLVED = "solved"
    UNSOLVED = "unsolved"
    UNKNOWN = "unknown"


class RunFlag(str, Enum):
    TIMED_OUT = "timed_out"
    TRUNCATED_GENERATION = "truncated_generation"
    ENV_CORRUPT = "env_corrupt"


class StepKind(str, Enum):
    EXPLORE = "explore"
    CHANGE = "change"


class StageLabel(str, Enum):
    """Workflow phases, in their canonical forward order."""

    ENVIRONMENT_VERIFICATION = "environment_verification"
    DEPENDENCY_INSTALLATION = "dependency_installation"
    INSPECTION_DEBUGGING = "inspection_debugging"
    PATCHING = "patching"
    VERIFICATION = "verification"


class ErrorType(str, Enum):
    ENV_SETUP = "env_setup"
    DEPENDENCY_RESOLUTION = "dependency_resolution"
    MISLOCALIZED_EDIT = "mislocalized_edit"
    INCORRECT_HYPOTHESIS = "incorrect_hypothesis"
    VERIFICATION_MISINTERPRETATION = "verification_misinterpretation"
    UNPRODUCTIVE_LOOPING = "unproductive_looping"


# ---------------------------------------------------------------------------
# steps


@dataclass(frozen=True)
class Observation:
    content: str
    returncode: int | None = None
    # unknown keys from framework dumps, carried through untouched
    extra: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"content": self.content, "returncode": self.returncode}
        for key in sorted(self.extra):
            out.setdefault(key, self.extra[key])
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Observation:
        extra = {k: v for k, v in data.items() if k not in ("content", "returncode")}
        return cls(
            content=_text(data.get("content")),
            returncode=_opt_int(data.get("returncode")),
            extra=extra,
        )


@dataclass(frozen=True)
class StepRecord:
    """One executed command and the environment's answer to it."""

    step_id: int
    command: str
    thought: str = ""
    observation: Observation | None = None
    token_usage: int | None = None
    action_extra: Mapping[str, Any] = field(default_factory=dict)

    @property
    def returncode(self) -> int | None:
        return self.observation.returncode if self.observation else None

    @property
    def output(self) -> str:
        return self.observation.content if self.observation else ""

    def to_dict(self) -> dict[str, Any]:
        action: dict[str, Any] = {
            "content": self.command,
            "thought": self.thought,
            "token_usage": self.token_usage,
        }
        for key in sorted(self.action_extra):
            action.setdefault(key, self.action_extra[key])
        return {
            "step_id": self.step_id,
            "action_ref": action,
            "observation_ref": self.observation.to_dict() if self.observation else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StepRecord:
        action = data.get("action_ref") or {}
        obs = data.get("observation_ref")
        return cls(
            step_id=int(data["step_id"]),
            command=_text(action.get("content")),
            thought=_text(action.get("thought")),
            observation=Observation.from_dict(obs) if obs is not None else None,
            token_usage=_opt_int(action.get("token_usage")),
            action_extra={
                k: v for k, v in action.items() if k not in ("content", "thought", "token_usage")
            },
        )


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[StepRecord, ...]
    task_id: str = ""
    framework_id: str = "unknown"
    backbone_id: str = "unknown"
    outcome: Outcome = Outcome.UNKNOWN
    run_flags: frozenset[RunFlag] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        object.__setattr__(self, "run_flags", frozenset(RunFlag(f) for f in self.run_flags))

    def __len__(self) -> int:
        return len(self.steps)

    def step(self, step_id: int) -> StepRecord:
        # fast path for the normalized 1..N layout
        if 0 < step_id <= len(self.steps) and self.steps[step_id - 1].step_id == step_id:
            return self.steps[step_id - 1]
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)

    def steps_to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.steps]

    def meta_to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "framework_id": self.framework_id,
            "backbone_id": self.backbone_id,
            "outcome": self.outcome.value,
            "run_flags": sorted(f.value for f in self.run_flags),
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.meta_to_dict(), "steps": self.steps_to_list()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Trajectory:
        return cls(
            steps=tuple(StepRecord.from_dict(s) for s in data.get("steps", [])),
            **_meta_kwargs(data),
        )

    @classmethod
    def from_steps_list(cls, steps: Iterable[Mapping[str, Any]], meta: Mapping[str, Any] | None = None) -> Trajectory:
        return cls(steps=tuple(StepRecord.from_dict(s) for s in steps), **_meta_kwargs(meta or {}))


def _meta_kwargs(data: Mapping[str, Any]) -> dict[str, Any]:
    return {
        "task_id": str(data.get("task_id", "")),
        "framework_id": str(data.get("framework_id", "unknown")),
        "backbone_id": str(data.get("backbone_id", "unknown")),
        "outcome": Outcome(data.get("outcome", Outcome.UNKNOWN.value)),
        "run_flags": frozenset(RunFlag(f) for f in data.get("run_flags", ())),
    }


def validate_trajectory(t: Trajectory) -> list[str]:
    """Return every invariant violation of ``t``; an empty list means valid."""
    problems: set[str] = set()
    if not t.steps:
        problems.add("trajectory has no steps")
    ids = [s.step_id for s in t.steps]
    seen: set[int] = set()
    for sid in ids:
        if sid < 1:
            problems.add(f"non-positive step id {sid}")
        if sid in seen:
            problems.add(f"duplicate step id {sid}")
        seen.add(sid)
    if ids and ids != sorted(ids):
        problems.add("step ids are not in execution order")
    if seen:
        for missing in sorted(set(range(1, max(seen) + 1)) - seen):
            problems.add(f"gap at id {missing}")
    for s in t.steps:
        if not s.command.strip():
            problems.add(f"step {s.step_id}: empty action text")
        if s.token_usage is not None and s.token_usage < 0:
            problems.add(f"step {s.step_id}: negative token usage")
    if t.outcome is Outcome.SOLVED and RunFlag.TIMED_OUT in t.run_flags:
        problems.add("solved outcome with timed_out flag")
    return sorted(problems)


# ---------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class StageSpan:
    stage: StageLabel
    start: int
    end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage", StageLabel(self.stage))

    def __contains__(self, step_id: object) -> bool:
        return isinstance(step_id, int) and self.start <= step_id <= self.end

    @property
    def bounds(self) -> tuple[int, int]:
        return (self.start, self.end)

    def __len__(self) -> int:
        return self.end - self.start + 1

    def to_dict(self) -> dict[str, Any]:
        return {"stage": self.stage.value, "start_step_id": self.start, "end_step_id": self.end}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StageSpan:
        return cls(StageLabel(data["stage"]), int(data["start_step_id"]), int(data["end_step_id"]))


@dataclass(frozen=True)
class StageSegmentation:
    spans: tuple[StageSpan, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple(self.spans))

    def __len__(self) -> int:
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)

    def index_of(self, step_id: int) -> int:
        """Index of the span holding ``step_id``."""
        for i, span in enumerate(self.spans):
            if step_id in span:
                return i
        raise KeyError(step_id)

    def span_of(self, step_id: int) -> StageSpan:
        return self.spans[self.index_of(step_id)]

    def find(self, bounds: tuple[int, int]) -> StageSpan | None:
        for span in self.spans:
            if span.bounds == tuple(bounds):
                return span
        return None

    def to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.spans]

    @classmethod
    def from_list(cls, data: Iterable[Mapping[str, Any]]) -> StageSegmentation:
        return cls(tuple(StageSpan.from_dict(d) for d in data))

    def problems(self, n_steps: int) -> list[str]:
        """Ordering/coverage violations against a trajectory of ``n_steps``."""
        out = []
        expected = 1
        for span in self.spans:
            if span.start != expected:
                out.append(f"span {span.bounds} does not start at {expected}")
            if span.end < span.start:
                out.append(f"span {span.bounds} is empty")
            expected = span.end + 1
        if expected != n_steps + 1:
            out.append(f"spans cover 1..{expected - 1}, expected 1..{n_steps}")
        return out


# ---------------------------------------------------------------------------
# diagnosis output


@dataclass(frozen=True)
class StageVerdict:
    """One object of ``mini_tracer_labels.json``."""

    stage_id: tuple[int, int]
    incorrect_step_ids: frozenset[int] = frozenset()
    unuseful_step_ids: frozenset[int] = frozenset()
    reasoning: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_id", tuple(int(x) for x in self.stage_id))
        object.__setattr__(self, "incorrect_step_ids", frozenset(self.incorrect_step_ids))
        object.__setattr__(self, "unuseful_step_ids", frozenset(self.unuseful_step_ids))

    @property
    def step_ids(self) -> frozenset[int]:
        return self.incorrect_step_ids | self.unuseful_step_ids

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage_id": list(self.stage_id),
            "incorrect_step_ids": sorted(self.incorrect_step_ids),
            "unuseful_step_ids": sorted(self.unuseful_step_ids),
            "reasoning": self.reasoning,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StageVerdict:
        start, end = data["stage_id"]
        return cls(
            stage_id=(int(start), int(end)),
            incorrect_step_ids=frozenset(int(x) for x in data.get("incorrect_step_ids", ())),
            unuseful_step_ids=frozenset(int(x) for x in data.get("unuseful_step_ids", ())),
            reasoning=str(data.get("reasoning", "")),
        )

    def problems(self) -> list[str]:
        out = []
        start, end = self.stage_id
        if start > end:
            out.append(f"stage_id {list(self.stage_id)} is reversed")
        for sid in sorted(self.step_ids):
            if not start <= sid <= end:
                out.append(f"step {sid} outside stage_id {list(self.stage_id)}")
        for sid in sorted(self.incorrect_step_ids & self.unuseful_step_ids):
            out.append(f"step {sid} labeled both incorrect and unuseful")
        return out


@dataclass(frozen=True)
class Evidence:
    step_id: int
    excerpt: str

    def to_dict(self) -> dict[str, Any]:
        return {"step_id": self.step_id, "excerpt": self.excerpt}


@dataclass(frozen=True)
class DiagnosisResult:
    stages: tuple[StageVerdict, ...] = ()
    evidence: tuple[Evidence, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "evidence", tuple(self.evidence))

    @property
    def is_empty(self) -> bool:
        return not self.stages

    @property
    def incorrect_step_ids(self) -> frozenset[int]:
        return frozenset().union(*(s.incorrect_step_ids for s in self.stages))

    @property
    def unuseful_step_ids(self) -> frozenset[int]:
        return frozenset().union(*(s.unuseful_step_ids for s in self.stages))

    @property
    def step_ids(self) -> frozenset[int]:
        return self.incorrect_step_ids | self.unuseful_step_ids

    @property
    def failure_stage(self) -> StageVerdict | None:
        """Earliest stage verdict that carries any label."""
        labeled = [s for s in self.stages if s.step_ids]
        pool = labeled or list(self.stages)
        return min(pool, key=lambda s: s.stage_id) if pool else None

    def labels_to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.stages]

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": self.labels_to_list(),
            "evidence": [e.to_dict() for e in self.evidence],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DiagnosisResult:
        return cls(
            stages=tuple(StageVerdict.from_dict(s) for s in data.get("stages", ())),
            evidence=tuple(Evidence(int(e["step_id"]), str(e["excerpt"])) for e in data.get("evidence", ())),
        )

    @classmethod
    def from_labels(cls, labels: Iterable[Mapping[str, Any]]) -> DiagnosisResult:
        return cls(stages=tuple(StageVerdict.from_dict(s) for s in labels))

    def problems(self) -> list[str]:
        return [p for s in self.stages for p in s.problems()]


# ---------------------------------------------------------------------------
# gold labels


@dataclass(frozen=True)
class GoldAnnotation:
    stage_spans: tuple[StageSpan, ...]
    incorrect_step_ids: frozenset[int] = frozenset()
    unuseful_step_ids: frozenset[int] = frozenset()
    error_critical_step: int | None = None
    error_type: ErrorType | None = None
    outcome: Outcome = Outcome.UNKNOWN
    category: str | None = None
    # per-span reasoning, aligned with stage_spans; empty when none was written
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_spans", tuple(self.stage_spans))
        object.__setattr__(self, "incorrect_step_ids", frozenset(self.incorrect_step_ids))
        object.__setattr__(self, "unuseful_step_ids", frozenset(self.unuseful_step_ids))
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        if self.error_type is not None:
            object.__setattr__(self, "error_type", ErrorType(self.error_type))
        object.__setattr__(self, "reasons", tuple(self.reasons))

    @property
    def n_steps(self) -> int:
        return self.stage_spans[-1].end if self.stage_spans else 0

    @property
    def segmentation(self) -> StageSegmentation:
        return StageSegmentation(self.stage_spans)

    def failure_stage(self) -> StageSpan | None:
        """Span holding the error-critical step, else the earliest span with an incorrect step."""
        if self.error_critical_step is not None:
            for span in self.stage_spans:
                if self.error_critical_step in span:
                    return span
        for span in self.stage_spans:
            if any(sid in span for sid in self.incorrect_step_ids):
                return span
        return None

    def to_dict(self) -> dict[str, Any]:
        stages = []
        for i, span in enumerate(self.stage_spans):
            stages.append(
                {
                    "stage": span.stage.value,
                    "stage_id": [span.start, span.end],
                    "incorrect_step_ids": sorted(x for x in self.incorrect_step_ids if x in span),
                    "unuseful_step_ids": sorted(x for x in self.unuseful_step_ids if x in span),
                    "reasoning": self.reasons[i] if self.reasons else "",
                }
            )
        return {
            "stages": stages,
            "error_critical_step": self.error_critical_step,
            "error_type": self.error_type.value if self.error_type else None,
            "outcome": self.outcome.value,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> GoldAnnotation:
        spans, incorrect, unuseful, reasons = [], set(), set(), []
        for obj in data.get("stages", ()):
            start, end = obj["stage_id"]
            spans.append(StageSpan(StageLabel(obj["stage"]), int(start), int(end)))
            incorrect.update(int(x) for x in obj.get("incorrect_step_ids", ()))
            unuseful.update(int(x) for x in obj.get("unuseful_step_ids", ()))
            reasons.append(str(obj.get("reasoning", "")))
        err = data.get("error_type")
        crit = data.get("error_critical_step")
        return cls(
            stage_spans=tuple(spans),
            incorrect_step_ids=frozenset(incorrect),
            unuseful_step_ids=frozenset(unuseful),
            error_critical_step=int(crit) if crit is not None else None,
            error_type=ErrorType(err) if err else None,
            outcome=Outcome(data.get("outcome", Outcome.UNKNOWN.value)),
            category=data.get("category"),
            reasons=tuple(reasons) if any(reasons) else (),
        )

    def problems(self) -> list[str]:
        out = StageSegmentation(self.stage_spans).problems(self.n_steps)
        if not self.stage_spans:
            out.append("no stage spans")
        if self.error_critical_step is not None and self.error_critical_step not in self.incorrect_step_ids:
            out.append(f"error_critical_step {self.error_critical_step} is not labeled incorrect")
        for sid in sorted(self.incorrect_step_ids & self.unuseful_step_ids):
            out.append(f"step {sid} labeled both incorrect and unuseful")
        for sid in sorted(self.incorrect_step_ids | self.unuseful_step_ids):
            if not 1 <= sid <= self.n_steps:
                out.append(f"labeled step {sid} outside 1..{self.n_steps}")
        if self.reasons and len(self.reasons) != len(self.stage_spans):
            out.append("reasons do not align with stage spans")
        return out


# ---------------------------------------------------------------------------
# file helpers


def dump_json(data: Any) -> str:
    """Canonical JSON text: stable key order as given, two-space indent, trailing newline."""
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def write_json(path: Path, data: Any) -> Path:
    path = Path(path)
    path.write_text(dump_json(data), encoding="utf-8")
    return path


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_trajectory(run_dir: Path) -> Trajectory:
    """Read ``steps.json`` (plus ``run_meta.json`` when present) from an index directory."""
    run_dir = Path(run_dir)
    meta_path = run_dir / META_FILE
    meta = read_json(meta_path) if meta_path.exists() else {"task_id": run_dir.name}
    return Trajectory.from_steps_list(read_json(run_dir / STEPS_FILE), meta)


def _text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        # chat-style content parts
        return "".join(p.get("text", "") if isinstance(p, Mapping) else str(p) for p in value)
    return str(value)


def _opt_int(value: Any) -> int | None:
    if value is None or isinstance(value, bool):
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        return None
