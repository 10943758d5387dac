"""Scoring predicted failure-relevant steps against gold labels, token
accounting, and per-trajectory analytics."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

from runtrace.commands import kind_of
from runtrace.diagnosis.session import estimate_tokens
from runtrace.model import (
    GOLD_FILE,
    LABELS_FILE,
    META_FILE,
    DiagnosisResult,
    GoldAnnotation,
    Outcome,
    StageLabel,
    StepKind,
    StepRecord,
    read_json,
)

log = logging.getLogger(__name__)

INDEX_DIRNAME = "trace"
REPORT_FILE = "report.json"
REPORT_LINES_FILE = "report.jsonl"


class EmptyGold(ValueError):
    pass


class NoScoreableInstances(ValueError):
    pass


class GoldMode(str, Enum):
    UNION = "union"  # incorrect and unuseful together
    INCORRECT = "incorrect"


class Stratum(str, Enum):
    DIFFICULTY = "difficulty"
    CATEGORY = "category"
    STAGE = "stage"


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def step_prf(predicted: Iterable[int], gold: Iterable[int]) -> PRF:
    """Set precision/recall/F1. An empty prediction scores precision 0."""
    P, G = frozenset(predicted), frozenset(gold)
    if not G:
        raise EmptyGold("gold step set is empty")
    hits = len(P & G)
    p = hits / len(P) if P else 0.0
    r = hits / len(G)
    return PRF(p, r, f1_score(p, r))


def difficulty(n_steps: int) -> str:
    if n_steps <= 15:
        return "short"
    if n_steps <= 40:
        return "medium"
    return "long"


@dataclass(frozen=True)
class Instance:
    instance_id: str
    predicted: frozenset[int]
    gold: frozenset[int]
    n_steps: int = 0
    category: str | None = None
    stage: str | None = None
    tokens: int | None = None

    def strata(self) -> dict[str, str]:
        return {
            Stratum.DIFFICULTY.value: difficulty(self.n_steps),
            Stratum.CATEGORY.value: self.category or "uncategorized",
            Stratum.STAGE.value: self.stage or "none",
        }


@dataclass(frozen=True)
class ScoredInstance:
    instance: Instance
    prf: PRF

    def to_dict(self) -> dict[str, Any]:
        inst = self.instance
        return {
            "instance_id": inst.instance_id,
            **self.prf.to_dict(),
            "predicted": sorted(inst.predicted),
            "gold": sorted(inst.gold),
            "n_steps": inst.n_steps,
            "tokens": inst.tokens,
            **inst.strata(),
        }


@dataclass(frozen=True)
class AggregateReport:
    macro_prf: PRF
    per_instance: tuple[ScoredInstance, ...]
    strata: Mapping[str, Mapping[str, PRF]] = field(default_factory=dict)
    excluded: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "macro": self.macro_prf.to_dict(),
            "n_instances": len(self.per_instance),
            "excluded": list(self.excluded),
            "strata": {
                name: {key: prf.to_dict() for key, prf in sorted(groups.items())}
                for name, groups in sorted(self.strata.items())
            },
            "per_instance": [s.to_dict() for s in self.per_instance],
        }


def _mean_prf(scores: Sequence[PRF]) -> PRF:
    return PRF(fmean(s.precision for s in scores), fmean(s.recall for s in scores), fmean(s.f1 for s in scores))


def macro_aggregate(
    instances: Iterable[Instance], stratify: Iterable[Stratum | str] = ()
) -> AggregateReport:
    """Per-instance scores averaged with equal weight; macro F1 is the mean of F1s."""
    scored, excluded = [], []
    for inst in sorted(instances, key=lambda i: i.instance_id):
        try:
            scored.append(ScoredInstance(inst, step_prf(inst.predicted, inst.gold)))
        except EmptyGold:
            log.info("instance %s has no gold steps; excluded from averaging", inst.instance_id)
            excluded.append(inst.instance_id)
    if not scored:
        raise NoScoreableInstances("no instance has a non-empty gold set")
    strata: dict[str, dict[str, PRF]] = {}
    for name in stratify:
        name = Stratum(name).value
        groups: dict[str, list[PRF]] = {}
        for s in scored:
            groups.setdefault(s.instance.strata()[name], []).append(s.prf)
        strata[name] = {key: _mean_prf(v) for key, v in groups.items()}
    return AggregateReport(_mean_prf([s.prf for s in scored]), tuple(scored), strata, tuple(excluded))


# ---------------------------------------------------------------------------
# label sets


def gold_steps(gold: GoldAnnotation, mode: GoldMode = GoldMode.UNION) -> frozenset[int]:
    if GoldMode(mode) is GoldMode.INCORRECT:
        return gold.incorrect_step_ids
    return gold.incorrect_step_ids | gold.unuseful_step_ids


def predicted_steps(
    result: DiagnosisResult, mode: GoldMode = GoldMode.UNION, cap: int | None = None
) -> frozenset[int]:
    """Predicted step set in the same view as the gold set, optionally capped.

    The cap keeps the earliest-listed stages' steps first (incorrect before
    unuseful within a stage), which is the order a ranked diagnoser emits.
    """
    ranked: list[int] = []
    for verdict in result.stages:
        ranked.extend(sorted(verdict.incorrect_step_ids))
        if GoldMode(mode) is GoldMode.UNION:
            ranked.extend(sorted(verdict.unuseful_step_ids))
    ordered = list(dict.fromkeys(ranked))
    if cap is not None:
        ordered = ordered[:cap]
    return frozenset(ordered)


def build_instance(
    instance_id: str,
    result: DiagnosisResult,
    gold: GoldAnnotation,
    mode: GoldMode = GoldMode.UNION,
    cap: int | None = None,
    tokens: int | None = None,
) -> Instance:
    failure = gold.failure_stage()
    return Instance(
        instance_id=instance_id,
        predicted=predicted_steps(result, mode, cap),
        gold=gold_steps(gold, mode),
        n_steps=gold.n_steps,
        category=gold.category,
        stage=failure.stage.value if failure else None,
        tokens=tokens,
    )


def _instance_key(path: Path, root: Path) -> str:
    rel = path.parent.relative_to(root).parts
    parts = [p for p in rel if p != INDEX_DIRNAME]
    return "/".join(parts) or "."


def discover_pairs(pred_dir: Path, gold_dir: Path) -> list[tuple[str, Path | None, Path]]:
    """Match ``gold_labels.json`` files with ``mini_tracer_labels.json`` files by relative location.

    ``trace`` index directories are transparent, so ``--pred out/run1/trace``
    pairs with ``--gold out/run1`` and ``--pred out`` pairs with ``--gold out``.
    """
    pred_dir, gold_dir = Path(pred_dir), Path(gold_dir)
    golds = {_instance_key(p, gold_dir): p for p in sorted(gold_dir.rglob(GOLD_FILE))}
    preds = {_instance_key(p, pred_dir): p for p in sorted(pred_dir.rglob(LABELS_FILE))}
    return [(key, preds.get(key), path) for key, path in sorted(golds.items())]


def _instance_name(key: str, gold_path: Path) -> str:
    meta = gold_path.parent / META_FILE
    if key == "." and meta.exists():
        return str(read_json(meta).get("task_id") or gold_path.parent.name)
    return gold_path.parent.name if key == "." else key


@dataclass(frozen=True)
class EvaluationReport:
    views: Mapping[str, AggregateReport]
    primary: GoldMode
    missing_predictions: tuple[str, ...] = ()

    @property
    def report(self) -> AggregateReport:
        return self.views[self.primary.value]

    def to_dict(self) -> dict[str, Any]:
        return {
            "gold_mode": self.primary.value,
            "macro": self.report.macro_prf.to_dict(),
            "missing_predictions": list(self.missing_predictions),
            "views": {name: view.to_dict() for name, view in self.views.items()},
        }


def evaluate_dirs(
    pred_dir: Path,
    gold_dir: Path,
    stratify: Iterable[Stratum | str] = (),
    mode: GoldMode = GoldMode.UNION,
    cap: int | None = None,
) -> EvaluationReport:
    pairs = discover_pairs(pred_dir, gold_dir)
    if not pairs:
        raise NoScoreableInstances(f"no {GOLD_FILE} found under {gold_dir}")
    stratify = list(stratify)
    missing = []
    loaded = []
    for key, pred_path, gold_path in pairs:
        gold = GoldAnnotation.from_dict(read_json(gold_path))
        if pred_path is None:
            missing.append(key)
            result = DiagnosisResult()
        else:
            result = DiagnosisResult.from_labels(read_json(pred_path))
        loaded.append((_instance_name(key, gold_path), result, gold))
    views = {}
    for view in GoldMode:
        views[view.value] = macro_aggregate(
            [build_instance(name, result, gold, view, cap) for name, result, gold in loaded], stratify
        )
    return EvaluationReport(views, GoldMode(mode), tuple(missing))


# ---------------------------------------------------------------------------
# tokens


@dataclass(frozen=True)
class TokenAccount:
    total: int
    estimated: bool
    by_phase: Mapping[str, int]

    def to_dict(self) -> dict[str, Any]:
        return {"total": self.total, "estimated": self.estimated, "by_phase": dict(sorted(self.by_phase.items()))}


def token_account(source: Any) -> TokenAccount:
    """Tokens used by a diagnosis session (``SessionState``) or by a run's step records.

    Reported usage is summed as-is; a turn or step without usage contributes
    ``ceil(chars / 4)`` of its text and marks the account as estimated.
    """
    if hasattr(source, "transcript"):
        items = [(turn.action or "turn", turn.usage, turn.response) for turn in source.transcript]
    else:
        items = []
        for step in source if not hasattr(source, "steps") else source.steps:
            step: StepRecord
            text = "\n".join(filter(None, [step.thought, step.command]))
            items.append((_step_phase(step), step.token_usage, text))
    by_phase: Counter[str] = Counter()
    estimated = False
    for phase, usage, text in items:
        if usage is None:
            usage = estimate_tokens(text)
            estimated = True
        by_phase[phase] += usage
    return TokenAccount(sum(by_phase.values()), estimated, dict(by_phase))


def _step_phase(step: StepRecord) -> str:
    return kind_of(step.command).value


# ---------------------------------------------------------------------------
# trajectory analytics


def effective_action_ratio(n_steps: int, incorrect: Iterable[int], unuseful: Iterable[int]) -> float:
    """Share of steps that carry no incorrect/unuseful label."""
    if n_steps <= 0:
        raise ValueError("trajectory has no steps")
    labeled = frozenset(incorrect) | frozenset(unuseful)
    return (n_steps - len(labeled)) / n_steps


@dataclass(frozen=True)
class BudgetDecomposition:
    correct_change: float
    useful_explore: float
    ineffective: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.correct_change, self.useful_explore, self.ineffective)

    def to_dict(self) -> dict[str, float]:
        return {
            "correct_change": self.correct_change,
            "useful_explore": self.useful_explore,
            "ineffective": self.ineffective,
        }


def budget_decomposition(kinds: Sequence[StepKind], labeled: Iterable[int]) -> BudgetDecomposition:
    """Split a run's steps into unlabeled changes, unlabeled explorations and labeled steps.

    ``kinds[i]`` is the kind of step ``i + 1``.
    """
    n = len(kinds)
    if n == 0:
        raise ValueError("trajectory has no steps")
    labeled = frozenset(labeled)
    change = sum(1 for i, k in enumerate(kinds, 1) if i not in labeled and StepKind(k) is StepKind.CHANGE)
    explore = sum(1 for i, k in enumerate(kinds, 1) if i not in labeled and StepKind(k) is StepKind.EXPLORE)
    ineffective = n - change - explore
    return BudgetDecomposition(change / n, explore / n, ineffective / n)


@dataclass(frozen=True)
class StageHistogram:
    counts: Mapping[str, Mapping[str, int]]

    def normalized(self) -> dict[str, dict[str, float]]:
        """Per-outcome shares; an outcome with no runs stays all zero."""
        out: dict[str, dict[str, float]] = {}
        for outcome in (Outcome.SOLVED.value, Outcome.UNSOLVED.value):
            total = sum(self.counts[s][outcome] for s in self.counts)
            out[outcome] = {s: (self.counts[s][outcome] / total if total else 0.0) for s in self.counts}
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"counts": {s: dict(v) for s, v in self.counts.items()}, "normalized": self.normalized()}


def error_stage_distribution(golds: Iterable[GoldAnnotation]) -> StageHistogram:
    """Error-critical steps per enclosing stage, split into solved and unsolved runs.

    Runs with an unknown outcome or no error-critical step are skipped.
    """
    counts = {s.value: {Outcome.SOLVED.value: 0, Outcome.UNSOLVED.value: 0} for s in StageLabel}
    for gold in golds:
        if gold.error_critical_step is None or gold.outcome is Outcome.UNKNOWN:
            continue
        span = next((sp for sp in gold.stage_spans if gold.error_critical_step in sp), None)
        if span is not None:
            counts[span.stage.value][gold.outcome.value] += 1
    return StageHistogram(counts)

