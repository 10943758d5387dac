"""Model-driven diagnosis loop over an index directory."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from runtrace.diagnosis.clients import ModelClient
from runtrace.diagnosis.prompts import SYSTEM_PROMPT, initial_message, violation_message
from runtrace.diagnosis.protocol import (
    FormatError,
    Phase,
    ProtocolViolation,
    SessionState,
    Turn,
    classify_command,
    format_error_message,
    parse_response,
    step_protocol,
    validate_labels,
)
from runtrace.diagnosis.sandbox import RunDirSandbox
from runtrace.model import (
    STAGE_RANGES_FILE,
    STEPS_FILE,
    TASK_FILE,
    TREE_FILE,
    DiagnosisResult,
    Evidence,
    StageSegmentation,
    read_json,
)

MAX_FORMAT_ERRORS = 3
EXCERPT_CHARS = 200


@dataclass(frozen=True)
class Budget:
    max_turns: int = 50
    max_tokens: int = 200_000

    def __post_init__(self) -> None:
        if self.max_turns <= 0 or self.max_tokens <= 0:
            raise ValueError("budgets must be positive")


class BudgetExhausted(Exception):
    def __init__(self, state: SessionState, result: DiagnosisResult, reason: str) -> None:
        super().__init__(reason)
        self.state = state
        self.result = result


def estimate_tokens(text: str) -> int:
    """Fallback when a provider reports no usage: one token per four characters."""
    return math.ceil(len(text) / 4)


def excerpt(step: dict, limit: int = EXCERPT_CHARS) -> str:
    action = (step.get("action_ref") or {}).get("content") or ""
    obs = step.get("observation_ref") or {}
    text = f"$ {' '.join(str(action).split())}"
    output = " ".join(str(obs.get("content") or "").split())
    if obs.get("returncode") is not None:
        text += f" -> rc={obs['returncode']}"
    if output:
        text += f": {output}"
    return text if len(text) <= limit else text[: limit - 3] + "..."


def collect_evidence(labels_result: DiagnosisResult, steps: list[dict], inspected: frozenset[int]) -> tuple[Evidence, ...]:
    by_id = {s.get("step_id"): s for s in steps}
    wanted = sorted(labels_result.step_ids & inspected) or sorted(inspected)
    return tuple(Evidence(sid, excerpt(by_id[sid])) for sid in wanted if sid in by_id)


def run_diagnosis(index_dir: Path, client: ModelClient, budget: Budget = Budget()) -> tuple[DiagnosisResult, SessionState]:
    """Drive ``client`` through the labeling protocol until it finalizes or is stopped."""
    index_dir = Path(index_dir)
    seg = StageSegmentation.from_list(read_json(index_dir / STAGE_RANGES_FILE))
    task_path = index_dir / TASK_FILE
    opening = initial_message(
        task_path.read_text(encoding="utf-8") if task_path.exists() else "",
        (index_dir / TREE_FILE).read_text(encoding="utf-8"),
        (index_dir / STAGE_RANGES_FILE).read_text(encoding="utf-8"),
    )
    sandbox = RunDirSandbox(index_dir)
    steps = json.loads((index_dir / STEPS_FILE).read_text(encoding="utf-8"))
    messages: list[dict[str, str]] = [{"role": "user", "content": opening}]
    state = SessionState()
    format_errors = 0

    def result_of(s: SessionState) -> DiagnosisResult:
        base = DiagnosisResult(stages=s.labels)
        return replace(base, evidence=collect_evidence(base, steps, s.inspected_step_ids))

    while True:
        if len(state.transcript) >= budget.max_turns:
            raise BudgetExhausted(state, result_of(state), f"turn budget of {budget.max_turns} used up")
        if state.token_total >= budget.max_tokens:
            raise BudgetExhausted(state, result_of(state), f"token budget of {budget.max_tokens} used up")

        reply = client.complete(SYSTEM_PROMPT, messages)
        usage = reply.total_tokens
        tokens = usage if usage is not None else estimate_tokens(reply.text)
        messages.append({"role": "assistant", "content": reply.text})

        try:
            _thought, command = parse_response(reply.text)
        except FormatError as err:
            format_errors += 1
            feedback = format_error_message(err)
            state = state.with_turn(Turn(reply.text, None, feedback, usage, "format_error"), tokens)
            if format_errors >= MAX_FORMAT_ERRORS:
                return result_of(state), replace(state, violation="format_errors")
            messages.append({"role": "user", "content": feedback})
            continue
        format_errors = 0

        cmd = classify_command(command)
        action = type(cmd).__name__
        try:
            new_state, outcome = step_protocol(state, cmd, seg, sandbox)
        except ProtocolViolation as exc:
            feedback = violation_message(str(exc))
            state = state.with_turn(Turn(reply.text, command, feedback, usage, action), tokens)
            return result_of(state), replace(state, violation=exc.kind.value)
        state = new_state.with_turn(Turn(reply.text, command, outcome, usage, action), tokens)

        if state.phase is Phase.FINALIZED:
            problems = validate_labels(state.labels, state, seg)
            if problems:
                state = replace(state, violation="invalid_labels", label_problems=tuple(str(p) for p in problems))
            return result_of(state), state
        messages.append({"role": "user", "content": outcome})
