"""Failure-onset localization: the model-driven protocol and a deterministic heuristic."""

from __future__ import annotations

from runtrace.diagnosis.clients import ClientFailure, HttpModelClient, ModelClient, ModelReply, ScriptedClient
from runtrace.diagnosis.heuristic import (
    DEFAULT_WEIGHTS,
    HeuristicWeights,
    StageScore,
    heuristic_diagnose,
    score_stage,
)
from runtrace.diagnosis.protocol import (
    Finalize,
    Forbidden,
    FormatError,
    InitWrite,
    Inspect,
    LabelViolation,
    LabelViolationKind,
    Phase,
    ProtocolViolation,
    SandboxFailure,
    SessionState,
    ViolationKind,
    Write,
    classify_command,
    parse_response,
    render_output,
    step_protocol,
    validate_labels,
)
from runtrace.diagnosis.sandbox import RunDirSandbox
from runtrace.diagnosis.session import Budget, BudgetExhausted, estimate_tokens, run_diagnosis

__all__ = [
    "Budget",
    "BudgetExhausted",
    "ClientFailure",
    "DEFAULT_WEIGHTS",
    "Finalize",
    "Forbidden",
    "FormatError",
    "HeuristicWeights",
    "HttpModelClient",
    "InitWrite",
    "Inspect",
    "LabelViolation",
    "LabelViolationKind",
    "ModelClient",
    "ModelReply",
    "Phase",
    "ProtocolViolation",
    "RunDirSandbox",
    "SandboxFailure",
    "ScriptedClient",
    "SessionState",
    "StageScore",
    "ViolationKind",
    "Write",
    "classify_command",
    "estimate_tokens",
    "heuristic_diagnose",
    "parse_response",
    "render_output",
    "run_diagnosis",
    "score_stage",
    "step_protocol",
    "validate_labels",
]
