"""Command discipline for a diagnosis session.

Each model turn must carry exactly one single-line ``bash`` block. The
command inside is classified by static analysis of the ``python -c`` code
it runs (which files it opens, in which mode, and which ``step_id`` it
compares against) and then fed to a small state machine:

    NEEDS_INIT --InitWrite--> ACTIVE --Inspect/Write--> ACTIVE --Finalize--> FINALIZED
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Sequence

from runtrace.commands import tokenize
from runtrace.model import (
    LABELS_FILE,
    STAGE_RANGES_FILE,
    STEPS_FILE,
    TASK_FILE,
    TREE_FILE,
    StageSegmentation,
    StageVerdict,
)

SENTINEL = "TRACER_FINAL_OUTPUT"
FINALIZE_COMMAND = f"echo {SENTINEL}"
ACTION_RE = re.compile(r"```bash\s*\n([\s\S]*?)\n?```")
MIN_STAGE_COVERAGE = 3
OUTPUT_LIMIT = 10000
OUTPUT_HALF = 5000

READABLE_FILES = frozenset({STEPS_FILE, TREE_FILE, STAGE_RANGES_FILE, TASK_FILE, LABELS_FILE})
WRITABLE_FILES = frozenset({LABELS_FILE})
ALLOWED_MODULES = frozenset({"json"})
BANNED_CALLS = frozenset({"eval", "exec", "compile", "getattr", "setattr", "delattr", "globals", "locals",
                          "vars", "__import__", "input", "breakpoint", "memoryview", "type", "object"})
_BLOCK_NODES = (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef, ast.For, ast.AsyncFor, ast.While,
                ast.If, ast.With, ast.AsyncWith, ast.Try)
if hasattr(ast, "Match"):
    _BLOCK_NODES += (ast.Match,)
if hasattr(ast, "TryStar"):
    _BLOCK_NODES += (ast.TryStar,)
_OPERATORS = {"&&", "||", ";", "|", "|&", "&", ">", ">>", "<", "<<", "<<<", "<<-", "(", ")", "&>", ">|", ">&", "<&"}


class FormatError(Exception):
    """The response did not carry exactly one usable single-line command."""

    def __init__(self, count: int, multiline: bool = False) -> None:
        self.count = count
        self.multiline = multiline
        what = "a multi-line command" if multiline else f"{count} bash blocks"
        super().__init__(f"expected exactly one single-line bash block, got {what}")


def parse_response(text: str) -> tuple[str, str]:
    """Split a model response into (thought, command)."""
    matches = list(ACTION_RE.finditer(text))
    if len(matches) != 1:
        raise FormatError(len(matches))
    command = matches[0].group(1).strip()
    if "\n" in command or not command:
        raise FormatError(1, multiline=bool(command))
    return text[: matches[0].start()].strip(), command


def format_error_message(err: FormatError) -> str:
    if err.multiline:
        return (
            "Your command spanned more than one line. Put the whole command on a single line "
            f"inside one ```bash block. To stop, send only: {FINALIZE_COMMAND}"
        )
    return (
        f"Each reply needs exactly one ```bash block with one command; {err.count} were found. "
        f"To stop, send only: {FINALIZE_COMMAND}"
    )


# ---------------------------------------------------------------------------
# command classification


@dataclass(frozen=True)
class InitWrite:
    code: str


@dataclass(frozen=True)
class Inspect:
    step_id: int
    code: str = field(default="", compare=False)


@dataclass(frozen=True)
class Write:
    code: str


@dataclass(frozen=True)
class Finalize:
    pass


@dataclass(frozen=True)
class Forbidden:
    reason: str


Command = InitWrite | Inspect | Write | Finalize | Forbidden


class _Effects(ast.NodeVisitor):
    """Collects file reads/writes and step_id comparisons from one-liner code."""

    def __init__(self, constants: dict[str, Any]) -> None:
        self.constants = constants
        self.reads: set[str] = set()
        self.writes: set[str] = set()
        self.step_ids: list[int | None] = []
        self.init_literal = False
        self.error: str | None = None

    def fail(self, reason: str) -> None:
        if self.error is None:
            self.error = reason

    def const(self, node: ast.AST | None) -> Any:
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name) and node.id in self.constants:
            return self.constants[node.id]
        return None

    def visit_Name(self, node: ast.Name) -> None:
        if node.id.startswith("__"):
            self.fail(f"dunder name {node.id}")
        if node.id in BANNED_CALLS:
            self.fail(f"use of {node.id}")

    def visit_Attribute(self, node: ast.Attribute) -> None:
        if node.attr.startswith("_"):
            self.fail(f"private attribute {node.attr}")
        self.generic_visit(node)

    def visit_Import(self, node: ast.Import) -> None:
        for alias in node.names:
            if alias.name not in ALLOWED_MODULES or alias.asname:
                self.fail(f"import of {alias.name}")

    def visit_ImportFrom(self, node: ast.ImportFrom) -> None:
        self.fail(f"import from {node.module}")

    def visit_Call(self, node: ast.Call) -> None:
        if isinstance(node.func, ast.Name) and node.func.id == "open":
            self._open(node)
        if (
            isinstance(node.func, ast.Attribute)
            and node.func.attr == "write"
            and node.args
            and self.const(node.args[0]) == "[]"
        ):
            self.init_literal = True
        self.generic_visit(node)

    def _open(self, node: ast.Call) -> None:
        path = self.const(node.args[0]) if node.args else self.const(_kw(node, "file"))
        mode_node = node.args[1] if len(node.args) > 1 else _kw(node, "mode")
        mode = "r" if mode_node is None else self.const(mode_node)
        if not isinstance(path, str):
            self.fail("open() on a computed path")
            return
        if mode not in ("r", "w"):
            self.fail(f"open() with mode {mode!r}")
            return
        if mode == "r":
            if path not in READABLE_FILES:
                self.fail(f"read of {path}")
            self.reads.add(path)
        else:
            if path not in WRITABLE_FILES:
                self.fail(f"write to {path}")
            self.writes.add(path)

    def visit_Compare(self, node: ast.Compare) -> None:
        operands = [node.left, *node.comparators]
        if any(_is_step_id_access(o) for o in operands):
            if len(node.ops) != 1 or not isinstance(node.ops[0], ast.Eq):
                self.step_ids.append(None)
            else:
                other = operands[1] if _is_step_id_access(operands[0]) else operands[0]
                value = self.const(other)
                self.step_ids.append(value if isinstance(value, int) and not isinstance(value, bool) else None)
        self.generic_visit(node)


def _kw(node: ast.Call, name: str) -> ast.AST | None:
    for kw in node.keywords:
        if kw.arg == name:
            return kw.value
    return None


def _is_step_id_access(node: ast.AST) -> bool:
    # x.get("step_id") or x["step_id"]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Attribute) and node.func.attr == "get":
        return bool(node.args) and isinstance(node.args[0], ast.Constant) and node.args[0].value == "step_id"
    if isinstance(node, ast.Subscript):
        key = node.slice
        return isinstance(key, ast.Constant) and key.value == "step_id"
    return False


def _constant_bindings(tree: ast.Module) -> dict[str, Any]:
    """Names bound exactly once, at top level, to a literal."""
    counts: dict[str, int] = {}
    values: dict[str, Any] = {}
    for node in ast.walk(tree):
        targets: list[ast.AST] = []
        if isinstance(node, ast.Assign):
            targets = node.targets
        elif isinstance(node, (ast.AugAssign, ast.AnnAssign, ast.NamedExpr)):
            targets = [node.target]
        elif isinstance(node, ast.comprehension):
            targets = [node.target]
        for target in targets:
            for name in ast.walk(target):
                if isinstance(name, ast.Name):
                    counts[name.id] = counts.get(name.id, 0) + 1
    for stmt in tree.body:
        if (
            isinstance(stmt, ast.Assign)
            and len(stmt.targets) == 1
            and isinstance(stmt.targets[0], ast.Name)
            and isinstance(stmt.value, ast.Constant)
        ):
            values[stmt.targets[0].id] = stmt.value.value
    return {k: v for k, v in values.items() if counts.get(k) == 1}


def analyze_code(code: str) -> Command:
    """Classify the body of a ``python -c`` one-liner by its effects."""
    if "\n" in code or "\r" in code:
        return Forbidden("multi-line code")
    try:
        tree = ast.parse(code)
    except SyntaxError:
        return Forbidden("syntax error")
    for node in ast.walk(tree):
        if isinstance(node, _BLOCK_NODES):
            return Forbidden(f"block statement ({type(node).__name__.lower()})")
        if isinstance(node, (ast.Global, ast.Nonlocal, ast.Delete, ast.Await, ast.Yield, ast.YieldFrom)):
            return Forbidden(f"statement {type(node).__name__.lower()}")
    effects = _Effects(_constant_bindings(tree))
    effects.visit(tree)
    if effects.error:
        return Forbidden(effects.error)
    if effects.writes:
        if STEPS_FILE in effects.reads:
            return Forbidden("inspect and write in one command")
        if effects.init_literal and not effects.reads:
            return InitWrite(code)
        return Write(code)
    if STEPS_FILE not in effects.reads:
        return Forbidden("command neither inspects steps.json nor writes labels")
    if not effects.step_ids:
        return Forbidden("dump of steps.json without a step_id filter")
    if len(effects.step_ids) != 1 or effects.step_ids[0] is None:
        return Forbidden("inspect must select exactly one literal step_id")
    return Inspect(effects.step_ids[0], code)


def classify_command(command: str) -> Command:
    command = command.strip()
    if command == FINALIZE_COMMAND:
        return Finalize()
    if "\n" in command:
        return Forbidden("multi-line command")
    try:
        tokens = tokenize(command)
    except ValueError:
        return Forbidden("unbalanced quoting")
    ops = [t for t in tokens if t in _OPERATORS]
    if any(t in ("&&", "||") for t in ops):
        return Forbidden("chaining")
    if any(t.startswith("<<") for t in ops):
        return Forbidden("heredoc")
    if ops:
        return Forbidden(f"shell operator {ops[0]}")
    if SENTINEL in command:
        return Forbidden("finalize must be the only command")
    if len(tokens) == 3 and tokens[0] in ("python", "python3") and tokens[1] == "-c":
        return analyze_code(tokens[2])
    return Forbidden("unrecognized command")


# ---------------------------------------------------------------------------
# session state


class Phase(str, Enum):
    NEEDS_INIT = "needs_init"
    ACTIVE = "active"
    FINALIZED = "finalized"


class ViolationKind(str, Enum):
    INIT_REQUIRED = "init_required"
    FORBIDDEN = "forbidden"
    INSUFFICIENT_COVERAGE = "insufficient_coverage"
    SESSION_FINALIZED = "session_finalized"


class ProtocolViolation(Exception):
    def __init__(self, kind: ViolationKind, detail: str = "") -> None:
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)


class SandboxFailure(Exception):
    pass


@dataclass(frozen=True)
class Turn:
    response: str
    command: str | None
    outcome: str
    usage: int | None = None
    action: str = ""


@dataclass(frozen=True)
class SessionState:
    phase: Phase = Phase.NEEDS_INIT
    inspected_step_ids: frozenset[int] = frozenset()
    inspected_stages: frozenset[int] = frozenset()
    labels: tuple[StageVerdict, ...] = ()
    transcript: tuple[Turn, ...] = ()
    token_total: int = 0
    violation: str | None = None
    label_problems: tuple[str, ...] = ()

    @property
    def inspected_stage_count(self) -> int:
        return len(self.inspected_stages)

    @property
    def labels_initialized(self) -> bool:
        return self.phase is not Phase.NEEDS_INIT

    def with_turn(self, turn: Turn, tokens: int) -> SessionState:
        return replace(self, transcript=self.transcript + (turn,), token_total=self.token_total + tokens)

    def to_dict(self) -> dict[str, Any]:
        return {
            "phase": self.phase.value,
            "inspected_step_ids": sorted(self.inspected_step_ids),
            "inspected_stage_count": self.inspected_stage_count,
            "labels": [v.to_dict() for v in self.labels],
            "turns": len(self.transcript),
            "token_total": self.token_total,
            "violation": self.violation,
            "label_problems": list(self.label_problems),
        }


@dataclass(frozen=True)
class ExecResult:
    returncode: int
    output: str
    labels: tuple[StageVerdict, ...] | None = None  # set when a label write was committed


class Executor:
    """What :func:`step_protocol` needs from a sandbox."""

    def run(self, cmd: Command) -> ExecResult:  # pragma: no cover - interface
        raise NotImplementedError


def render_output(returncode: int, output: str) -> str:
    """Observation text shown to the model, eliding the middle of long outputs."""
    if len(output) <= OUTPUT_LIMIT:
        return f"<returncode>{returncode}</returncode>\n<output>\n{output}</output>"
    return (
        f"<returncode>{returncode}</returncode>\n"
        "<warning>\nOutput exceeded the display limit; the middle part was dropped. "
        "Prefer commands with narrower output.\n</warning>\n"
        f"<output_head>\n{output[:OUTPUT_HALF]}\n</output_head>\n"
        f"<elided_chars>\n{len(output) - OUTPUT_LIMIT} characters elided\n</elided_chars>\n"
        f"<output_tail>\n{output[-OUTPUT_HALF:]}\n</output_tail>"
    )


def step_protocol(
    state: SessionState, cmd: Command, seg: StageSegmentation, executor: Executor
) -> tuple[SessionState, str]:
    """Advance the session by one classified command."""
    if state.phase is Phase.FINALIZED:
        raise ProtocolViolation(ViolationKind.SESSION_FINALIZED)
    if isinstance(cmd, Forbidden):
        raise ProtocolViolation(ViolationKind.FORBIDDEN, cmd.reason)
    if state.phase is Phase.NEEDS_INIT and not isinstance(cmd, InitWrite):
        raise ProtocolViolation(ViolationKind.INIT_REQUIRED, type(cmd).__name__)
    if isinstance(cmd, Finalize):
        needed = MIN_STAGE_COVERAGE if len(seg) >= MIN_STAGE_COVERAGE else 0
        if state.inspected_stage_count < needed:
            raise ProtocolViolation(
                ViolationKind.INSUFFICIENT_COVERAGE,
                f"inspected {state.inspected_stage_count} distinct stages, need {needed}",
            )
        return replace(state, phase=Phase.FINALIZED), SENTINEL

    result = executor.run(cmd)
    new = state
    if isinstance(cmd, Inspect) and result.returncode == 0:
        try:
            stage_index = seg.index_of(cmd.step_id)
        except KeyError:
            stage_index = None
        new = replace(
            new,
            inspected_step_ids=new.inspected_step_ids | {cmd.step_id},
            inspected_stages=new.inspected_stages | ({stage_index} if stage_index is not None else set()),
        )
    if result.labels is not None:
        new = replace(new, labels=result.labels)
    if isinstance(cmd, InitWrite) and result.labels is not None:
        new = replace(new, phase=Phase.ACTIVE)
    return new, render_output(result.returncode, result.output)


# ---------------------------------------------------------------------------
# label validation


class LabelViolationKind(str, Enum):
    EVIDENCE = "EvidenceViolation"
    SPAN_MISMATCH = "SpanMismatch"
    STEP_OUTSIDE_SPAN = "StepOutsideSpan"
    EMPTY_REASONING = "EmptyReasoning"
    NO_INSPECTION = "NoInspection"
    OVERLAP = "Overlap"


@dataclass(frozen=True, order=True)
class LabelViolation:
    kind: LabelViolationKind
    step_id: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = f"({self.step_id})" if self.step_id is not None else ""
        return f"{self.kind.value}{where}{': ' + self.detail if self.detail else ''}"


def validate_labels(
    labels: Sequence[StageVerdict], state: SessionState, seg: StageSegmentation
) -> list[LabelViolation]:
    """Every evidence and schema-level problem of a final label set."""
    out: set[LabelViolation] = set()
    if not labels and not state.inspected_step_ids:
        out.add(LabelViolation(LabelViolationKind.NO_INSPECTION, detail="empty labels need one inspection"))
    for verdict in labels:
        start, end = verdict.stage_id
        if seg.find((start, end)) is None:
            out.add(LabelViolation(LabelViolationKind.SPAN_MISMATCH, detail=f"stage_id [{start}, {end}]"))
        if not verdict.reasoning.strip():
            out.add(LabelViolation(LabelViolationKind.EMPTY_REASONING, detail=f"stage_id [{start}, {end}]"))
        for sid in sorted(verdict.incorrect_step_ids & verdict.unuseful_step_ids):
            out.add(LabelViolation(LabelViolationKind.OVERLAP, sid))
        for sid in sorted(verdict.step_ids):
            if not start <= sid <= end:
                out.add(LabelViolation(LabelViolationKind.STEP_OUTSIDE_SPAN, sid, f"stage_id [{start}, {end}]"))
            if sid not in state.inspected_step_ids:
                out.add(LabelViolation(LabelViolationKind.EVIDENCE, sid))
    return sorted(out, key=lambda v: (v.kind.value, v.step_id if v.step_id is not None else -1, v.detail))


def labels_from_json(data: Iterable[dict]) -> tuple[StageVerdict, ...]:
    return tuple(StageVerdict.from_dict(obj) for obj in data)
