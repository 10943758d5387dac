"""Evolving extraction: find the step-bearing artifact in a run directory,
pick (or register) a parser for its format, and normalize it into a
:class:`~runtrace.model.Trajectory`.

Parsers are declarative descriptors keyed by a structural fingerprint of the
step artifact. Two dialects are understood:

``step_array``
    A JSON array of step objects (the canonical ``steps.json`` shape or any
    framework dump with per-step command/observation fields).
``chat``
    An ordered chat transcript (JSON array, ``{"messages": [...]}`` wrapper,
    or JSONL) where assistant messages carry fenced bash commands and the
    following user/tool message carries the observation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping

from runtrace.model import (
    GOLD_FILE,
    LABELS_FILE,
    META_FILE,
    RUN_FLAGS_FILE,
    STAGE_RANGES_FILE,
    STEPS_FILE,
    Observation,
    Outcome,
    RunFlag,
    StepRecord,
    Trajectory,
    _opt_int,
    _text,
    dump_json,
)

log = logging.getLogger(__name__)

INDEX_DIRNAME = "trace"
FINGERPRINT_DEPTH = 3
MAX_SCAN_DEPTH = 4
SHORT_CORRECT_MIN_STEPS = 10

ACTION_PATTERN = r"```bash\s*\n([\s\S]*?)\n?```"
_OPEN_FENCE = re.compile(r"```bash\s*\n")
_SKIP_FILES = {LABELS_FILE, GOLD_FILE, STAGE_RANGES_FILE, META_FILE, RUN_FLAGS_FILE, "parser_registry.json",
               "diagnosis.json", "trace_report.json", "replay_budget.json", "report.json"}
_TASK_NAMES = ("task.md", "task.txt", "problem_statement.md", "problem_statement.txt", "instruction.md", "prompt.md")
_DOC_SUFFIXES = (".json", ".jsonl", ".traj")
_CONFIG_NAMES = ("config.json", "config.yaml", "config.yml", "config.toml", "run_config.json")


class NoStepArtifact(Exception):
    pass


class MalformedArtifact(Exception):
    def __init__(self, path: Path, offset: int, detail: str = "") -> None:
        super().__init__(f"{path}: unparseable content at byte {offset}{': ' + detail if detail else ''}")
        self.path = path
        self.offset = offset


class DuplicateFingerprint(Exception):
    pass


class DescriptorMismatch(ValueError):
    pass


class Dialect(str, Enum):
    STEP_ARRAY = "step_array"
    CHAT = "chat"


# ---------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class LayoutSpec:
    artifact_paths: Mapping[str, str]
    format_fingerprint: str
    dialect: Dialect
    # dotted key under which the record list sits inside a wrapper object ("" for top level)
    records_key: str = ""

    @property
    def steps_path(self) -> str:
        return self.artifact_paths["steps"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "artifact_paths": dict(self.artifact_paths),
            "format_fingerprint": self.format_fingerprint,
            "dialect": self.dialect.value,
            "records_key": self.records_key,
        }


def key_paths(doc: Any, max_depth: int = FINGERPRINT_DEPTH) -> set[str]:
    """Dotted key paths of ``doc`` down to ``max_depth`` object levels; ``[]`` marks list items."""
    paths: set[str] = set()

    def walk(node: Any, prefix: str, depth: int) -> None:
        if isinstance(node, Mapping):
            if depth >= max_depth:
                return
            for key, value in node.items():
                path = f"{prefix}.{key}" if prefix else str(key)
                paths.add(path)
                walk(value, path, depth + 1)
        elif isinstance(node, list):
            for item in node:
                walk(item, prefix + "[]", depth)

    walk(doc, "", 0)
    return paths


def fingerprint(doc: Any) -> str:
    digest = hashlib.sha256("\n".join(sorted(key_paths(doc))).encode("utf-8"))
    return digest.hexdigest()[:16]


def _iter_files(run_dir: Path) -> Iterator[Path]:
    def walk(d: Path, depth: int) -> Iterator[Path]:
        for entry in sorted(d.iterdir(), key=lambda p: p.name):
            if entry.name.startswith("."):
                continue
            if entry.is_dir():
                if depth < MAX_SCAN_DEPTH and entry.name != INDEX_DIRNAME:
                    yield from walk(entry, depth + 1)
            elif entry.is_file():
                yield entry

    yield from walk(run_dir, 1)


def _load_lenient(path: Path) -> Any | None:
    """Parse JSON or JSONL for probing; unparseable content yields None (or the parseable prefix)."""
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError):
        return None
    if path.suffix == ".jsonl":
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                continue
        return rows
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return None


_WRAPPER_KEYS = ("steps", "messages", "history", "trajectory", "transcript")


def _records(doc: Any) -> tuple[list[Any], str] | None:
    if isinstance(doc, list):
        return doc, ""
    if isinstance(doc, Mapping):
        for key in _WRAPPER_KEYS:
            if isinstance(doc.get(key), list):
                return doc[key], key
    return None


def _probe(doc: Any) -> tuple[Dialect, str] | None:
    found = _records(doc)
    if found is None:
        return None
    records, key = found
    dicts = [r for r in records if isinstance(r, Mapping)]
    if not dicts:
        return None
    if all("step_id" in r for r in dicts) and any("action_ref" in r or "action" in r or "command" in r for r in dicts):
        return Dialect.STEP_ARRAY, key
    if all("role" in r for r in dicts if "content" in r) and any(
        r.get("role") == "assistant" and _OPEN_FENCE.search(_text(r.get("content"))) for r in dicts
    ):
        return Dialect.CHAT, key
    return None


def discover_layout(run_dir: Path) -> LayoutSpec:
    """Locate the step-bearing artifact and the task/config/log files around it."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise NoStepArtifact(f"{run_dir} is not a directory")
    candidates: list[tuple[tuple, Path, Dialect, str, Any]] = []
    roles: dict[str, str] = {}
    for path in _iter_files(run_dir):
        rel = path.relative_to(run_dir).as_posix()
        name = path.name
        if name in _TASK_NAMES and "task" not in roles:
            roles["task"] = rel
        elif name in _CONFIG_NAMES and "config" not in roles:
            roles["config"] = rel
        elif path.suffix == ".log" and "logs" not in roles:
            roles["logs"] = rel
        if path.suffix not in _DOC_SUFFIXES or name in _SKIP_FILES:
            continue
        doc = _load_lenient(path)
        probed = _probe(doc) if doc is not None else None
        if probed is None:
            continue
        dialect, key = probed
        rank = (dialect is not Dialect.STEP_ARRAY, name != STEPS_FILE, rel.count("/"), rel)
        candidates.append((rank, path, dialect, key, doc))
    if not candidates:
        raise NoStepArtifact(f"no ordered action sequence found under {run_dir}")
    _, path, dialect, key, doc = min(candidates, key=lambda c: c[0])
    roles["steps"] = path.relative_to(run_dir).as_posix()
    if roles.get("config") == roles["steps"]:
        del roles["config"]
    return LayoutSpec(
        artifact_paths=MappingProxyType(dict(sorted(roles.items()))),
        format_fingerprint=fingerprint(doc),
        dialect=dialect,
        records_key=key,
    )


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ParserDescriptor:
    """Declarative field-mapping rules for one artifact format."""

    name: str
    version: str
    fingerprint: str
    dialect: Dialect
    rules: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dialect", Dialect(self.dialect))
        object.__setattr__(self, "rules", MappingProxyType(dict(self.rules)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "fingerprint": self.fingerprint,
            "dialect": self.dialect.value,
            "rules": dict(self.rules),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ParserDescriptor:
        return cls(data["name"], str(data["version"]), data["fingerprint"], Dialect(data["dialect"]), data.get("rules", {}))


STEP_ARRAY_RULES = {
    "records_key": "",
    "step_id": "step_id",
    "command": "action_ref.content",
    "thought": "action_ref.thought",
    "token_usage": "action_ref.token_usage",
    "observation": "observation_ref",
    "observation_content": "observation_ref.content",
    "returncode": "observation_ref.returncode",
}

CHAT_RULES = {
    "records_key": "",
    "role_key": "role",
    "content_key": "content",
    "assistant_roles": ["assistant"],
    "observation_roles": ["user", "tool"],
    "command_pattern": ACTION_PATTERN,
    "returncode_pattern": r"<returncode>\s*(-?\d+)\s*</returncode>",
    "output_pattern": r"<output>\n?([\s\S]*?)\n?</output>",
    "usage_key": "usage.total_tokens",
    "exit_status_key": "exit_status",
}


class ParserRegistry:
    """Append-only map from fingerprint to descriptor. Registration returns a new registry."""

    def __init__(self, entries: Mapping[str, ParserDescriptor] | None = None) -> None:
        self._entries = MappingProxyType(dict(entries or {}))

    @property
    def entries(self) -> Mapping[str, ParserDescriptor]:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, fp: object) -> bool:
        return fp in self._entries

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ParserRegistry) and dict(self._entries) == dict(other._entries)

    def to_dict(self) -> dict[str, Any]:
        return {fp: d.to_dict() for fp, d in sorted(self._entries.items())}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ParserRegistry:
        return cls({fp: ParserDescriptor.from_dict(d) for fp, d in data.items()})

    def save(self, path: Path) -> None:
        Path(path).write_text(dump_json(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> ParserRegistry:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def with_builtins(cls) -> ParserRegistry:
        reg = cls()
        for desc in builtin_descriptors():
            reg = register_parser(reg, desc)
        return reg


def select_parser(spec: LayoutSpec, reg: ParserRegistry) -> ParserDescriptor | None:
    """Exact fingerprint lookup; ``None`` means a parser has to be registered first."""
    return reg.entries.get(spec.format_fingerprint)


def register_parser(reg: ParserRegistry, descriptor: ParserDescriptor) -> ParserRegistry:
    if descriptor.fingerprint in reg.entries:
        raise DuplicateFingerprint(descriptor.fingerprint)
    return ParserRegistry({**reg.entries, descriptor.fingerprint: descriptor})


def synthesize_descriptor(spec: LayoutSpec, name: str | None = None) -> ParserDescriptor:
    """Draft a descriptor for an unregistered fingerprint from the probed dialect.

    This is the registration hook: callers may instead author a descriptor
    by hand and pass it to :func:`register_parser`.
    """
    rules = dict(STEP_ARRAY_RULES if spec.dialect is Dialect.STEP_ARRAY else CHAT_RULES)
    rules["records_key"] = spec.records_key
    return ParserDescriptor(
        name=name or f"{spec.dialect.value}-{spec.format_fingerprint[:8]}",
        version="1",
        fingerprint=spec.format_fingerprint,
        dialect=spec.dialect,
        rules=rules,
    )


_SAMPLE_STEPS = [
    {
        "step_id": 1,
        "action_ref": {"content": "ls", "thought": "", "token_usage": 1},
        "observation_ref": {"content": "", "returncode": 0},
    }
]
_SAMPLE_CHAT = [
    {"role": "system", "content": ""},
    {"role": "user", "content": ""},
    {"role": "assistant", "content": "```bash\nls\n```", "usage": {"total_tokens": 1}},
    {"role": "user", "content": "<returncode>0</returncode>"},
]


def builtin_descriptors() -> list[ParserDescriptor]:
    return [
        ParserDescriptor("canonical-steps", "1", fingerprint(_SAMPLE_STEPS), Dialect.STEP_ARRAY, STEP_ARRAY_RULES),
        ParserDescriptor("chat-transcript", "1", fingerprint(_SAMPLE_CHAT), Dialect.CHAT, CHAT_RULES),
    ]


# ---------------------------------------------------------------------------
# parsing


def _dig(obj: Any, dotted: str) -> Any:
    if not dotted:
        return obj
    for part in dotted.split("."):
        if not isinstance(obj, Mapping):
            return None
        obj = obj.get(part)
    return obj


@dataclass
class _Raw:
    doc: Any
    truncated_tail: bool = False


def _load_strict(path: Path) -> _Raw:
    data = path.read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedArtifact(path, exc.start, "invalid utf-8") from exc
    if path.suffix != ".jsonl":
        try:
            return _Raw(json.loads(text))
        except json.JSONDecodeError as exc:
            raise MalformedArtifact(path, len(text[: exc.pos].encode("utf-8")), exc.msg) from exc
    rows: list[Any] = []
    offset = 0
    lines = text.splitlines(keepends=True)
    for i, line in enumerate(lines):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                last = i == len(lines) - 1
                if last and not line.endswith("\n"):
                    # dangling final record: the writer died mid-line
                    return _Raw(rows, truncated_tail=True)
                raise MalformedArtifact(path, offset + len(line[: exc.pos].encode("utf-8")), exc.msg) from exc
        offset += len(line.encode("utf-8"))
    return _Raw(rows)


@dataclass
class _Pending:
    command: str
    thought: str
    token_usage: int | None
    extra: dict = field(default_factory=dict)
    observation: Observation | None = None


def _parse_step_array(records: list[Any], rules: Mapping[str, Any]) -> tuple[list[_Pending], set[RunFlag]]:
    rows = [r for r in records if isinstance(r, Mapping)]
    rows.sort(key=lambda r: (_opt_int(_dig(r, rules["step_id"])) or 0))
    action_key = rules["command"].rsplit(".", 1)[0] if "." in rules["command"] else ""
    std_action = {p.rsplit(".", 1)[-1] for p in (rules["command"], rules.get("thought", ""), rules.get("token_usage", "")) if p}
    out: list[_Pending] = []
    carry: list[str] = []
    for r in rows:
        command = _text(_dig(r, rules["command"])).strip("\n")
        thought = _text(_dig(r, rules.get("thought", ""))) if rules.get("thought") else ""
        if not command.strip():
            # commandless event: fold its text into the next step's thought
            text = thought or _text(_dig(r, rules.get("observation_content", "")))
            if text.strip():
                carry.append(text.strip())
            continue
        if carry:
            thought = "\n\n".join(carry + ([thought] if thought else []))
            carry = []
        obs_raw = _dig(r, rules.get("observation", "")) if rules.get("observation") else None
        obs = None
        if obs_raw is not None:
            if isinstance(obs_raw, Mapping):
                obs = Observation.from_dict(
                    {
                        "content": _dig(r, rules["observation_content"]),
                        "returncode": _dig(r, rules["returncode"]),
                        **{k: v for k, v in obs_raw.items() if k not in ("content", "returncode")},
                    }
                )
            else:
                obs = Observation(_text(obs_raw))
        action_obj = _dig(r, action_key) if action_key else None
        extra = {}
        if isinstance(action_obj, Mapping):
            extra = {k: v for k, v in action_obj.items() if k not in std_action}
        usage = _opt_int(_dig(r, rules["token_usage"])) if rules.get("token_usage") else None
        out.append(_Pending(command, thought, usage, extra, obs))
    return out, set()


def _parse_chat(records: list[Any], rules: Mapping[str, Any]) -> tuple[list[_Pending], set[RunFlag]]:
    role_key, content_key = rules["role_key"], rules["content_key"]
    assistant_roles = set(rules["assistant_roles"])
    obs_roles = set(rules["observation_roles"])
    cmd_re = re.compile(rules["command_pattern"])
    rc_re = re.compile(rules["returncode_pattern"])
    out_re = re.compile(rules["output_pattern"])
    exit_key = rules.get("exit_status_key", "")
    flags: set[RunFlag] = set()

    steps: list[_Pending] = []
    carry: list[str] = []
    awaiting: _Pending | None = None
    rows = [r for r in records if isinstance(r, Mapping)]
    for idx, r in enumerate(rows):
        status = _dig(r, exit_key) if exit_key else None
        if isinstance(status, str) and re.search(r"time ?out|timelimit", status, re.IGNORECASE):
            flags.add(RunFlag.TIMED_OUT)
        role = r.get(role_key)
        content = _text(r.get(content_key))
        if role in assistant_roles:
            matches = list(cmd_re.finditer(content))
            if not matches:
                if idx == len(rows) - 1 and _OPEN_FENCE.search(content):
                    # opened a command block and never closed it
                    flags.add(RunFlag.TRUNCATED_GENERATION)
                elif content.strip():
                    carry.append(content.strip())
                awaiting = None
                continue
            usage = _opt_int(_dig(r, rules.get("usage_key", ""))) if rules.get("usage_key") else None
            for n, m in enumerate(matches):
                thought = content[: matches[0].start()].strip() if n == 0 else ""
                if carry and n == 0:
                    thought = "\n\n".join(carry + ([thought] if thought else []))
                    carry = []
                # attribute the message's usage to its first command
                steps.append(_Pending(m.group(1).strip("\n"), thought, usage if n == 0 else None))
            awaiting = steps[-1]
        elif role in obs_roles and awaiting is not None:
            rc_match = rc_re.search(content)
            out_match = out_re.search(content)
            awaiting.observation = Observation(
                content=out_match.group(1) if out_match else content,
                returncode=int(rc_match.group(1)) if rc_match else None,
            )
            awaiting = None
    return steps, flags


def parse_and_normalize(run_dir: Path, descriptor: ParserDescriptor, layout: LayoutSpec | None = None) -> Trajectory:
    """One step per executed command, re-indexed 1..N, with run flags from artifact markers."""
    run_dir = Path(run_dir)
    layout = layout or discover_layout(run_dir)
    if layout.format_fingerprint != descriptor.fingerprint:
        raise DescriptorMismatch(
            f"descriptor {descriptor.name} is for {descriptor.fingerprint}, directory is {layout.format_fingerprint}"
        )
    path = run_dir / layout.steps_path
    raw = _load_strict(path)
    found = _records(raw.doc)
    records = found[0] if found else []
    key = descriptor.rules.get("records_key", "")
    if key:
        records = _dig(raw.doc, key) or []
    if descriptor.dialect is Dialect.STEP_ARRAY:
        pending, flags = _parse_step_array(records, descriptor.rules)
    else:
        pending, flags = _parse_chat(records, descriptor.rules)
    if raw.truncated_tail:
        flags.add(RunFlag.TRUNCATED_GENERATION)

    meta = _read_sidecar(run_dir / META_FILE)
    flags |= _sidecar_flags(run_dir / RUN_FLAGS_FILE)
    outcome = meta.get("outcome")
    if outcome is None and isinstance(raw.doc, Mapping):
        resolved = _dig(raw.doc, "info.resolved")
        if isinstance(resolved, bool):
            outcome = Outcome.SOLVED.value if resolved else Outcome.UNSOLVED.value
    steps = tuple(
        StepRecord(
            step_id=i,
            command=p.command,
            thought=p.thought,
            observation=p.observation,
            token_usage=p.token_usage,
            action_extra=p.extra,
        )
        for i, p in enumerate(pending, 1)
    )
    return Trajectory(
        steps=steps,
        task_id=str(meta.get("task_id") or run_dir.name),
        framework_id=str(meta.get("framework_id") or descriptor.name),
        backbone_id=str(meta.get("backbone_id") or "unknown"),
        outcome=Outcome(outcome or Outcome.UNKNOWN.value),
        run_flags=frozenset(flags | {RunFlag(f) for f in meta.get("run_flags", ())}),
    )


def _read_sidecar(path: Path) -> dict[str, Any]:
    if not path.exists():
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedArtifact(path, exc.pos, exc.msg) from exc
    return data if isinstance(data, dict) else {}


def _sidecar_flags(path: Path) -> set[RunFlag]:
    data = _read_sidecar(path)
    return {flag for flag in RunFlag if data.get(flag.value) is True}


def read_task_text(run_dir: Path, layout: LayoutSpec) -> str:
    """Task statement: the task artifact, else the first user message of a chat transcript."""
    run_dir = Path(run_dir)
    if "task" in layout.artifact_paths:
        return (run_dir / layout.artifact_paths["task"]).read_text(encoding="utf-8")
    if layout.dialect is Dialect.CHAT:
        doc = _load_lenient(run_dir / layout.steps_path)
        found = _records(doc) if doc is not None else None
        for r in found[0] if found else []:
            if isinstance(r, Mapping) and r.get("role") == "user":
                return _text(r.get("content"))
    return ""


@dataclass(frozen=True)
class Extraction:
    trajectory: Trajectory
    layout: LayoutSpec
    descriptor: ParserDescriptor
    registry: ParserRegistry
    registered: bool


def extract(run_dir: Path, registry: ParserRegistry | None = None) -> Extraction:
    """discover -> select (or synthesize + register) -> parse."""
    registry = registry if registry is not None else ParserRegistry.with_builtins()
    layout = discover_layout(run_dir)
    descriptor = select_parser(layout, registry)
    registered = False
    if descriptor is None:
        descriptor = synthesize_descriptor(layout)
        registry = register_parser(registry, descriptor)
        registered = True
        log.info("registered parser %s for fingerprint %s", descriptor.name, layout.format_fingerprint)
    t = parse_and_normalize(run_dir, descriptor, layout)
    return Extraction(t, layout, descriptor, registry, registered)


# ---------------------------------------------------------------------------
# filters


class Decision(str, Enum):
    RETAINED = "retained"
    REJECTED = "rejected"


class RejectReason(str, Enum):
    TIMEOUT = "timeout"
    TRUNCATED_GENERATION = "truncated_generation"
    ENV_CORRUPT = "env_corrupt"
    SHORT_CORRECT = "short_correct"


@dataclass(frozen=True)
class FilterVerdict:
    decision: Decision
    reason: RejectReason | None = None

    def __post_init__(self) -> None:
        if (self.decision is Decision.REJECTED) != (self.reason is not None):
            raise ValueError("a rejection needs a reason and a retention must not have one")

    @property
    def retained(self) -> bool:
        return self.decision is Decision.RETAINED

    def to_dict(self) -> dict[str, Any]:
        return {"decision": self.decision.value, "reason": self.reason.value if self.reason else None}


RETAINED = FilterVerdict(Decision.RETAINED)

_FILTERS: list[tuple[RejectReason, Any]] = [
    (RejectReason.TIMEOUT, lambda t: RunFlag.TIMED_OUT in t.run_flags),
    (RejectReason.TRUNCATED_GENERATION, lambda t: RunFlag.TRUNCATED_GENERATION in t.run_flags),
    (RejectReason.ENV_CORRUPT, lambda t: RunFlag.ENV_CORRUPT in t.run_flags),
    (RejectReason.SHORT_CORRECT, lambda t: t.outcome is Outcome.SOLVED and len(t.steps) < SHORT_CORRECT_MIN_STEPS),
]


def apply_filters(t: Trajectory) -> FilterVerdict:
    """Corpus quality filters, applied in order; the first match names the reason."""
    for reason, matches in _FILTERS:
        if matches(t):
            return FilterVerdict(Decision.REJECTED, reason)
    return RETAINED


def filter_corpus(trajectories: Iterable[Trajectory]) -> list[FilterVerdict]:
    return [apply_filters(t) for t in trajectories]


__all__ = [
    "Dialect",
    "Extraction",
    "FilterVerdict",
    "LayoutSpec",
    "ParserDescriptor",
    "ParserRegistry",
    "apply_filters",
    "discover_layout",
    "extract",
    "fingerprint",
    "parse_and_normalize",
    "register_parser",
    "select_parser",
    "synthesize_descriptor",
    "replace",
]
