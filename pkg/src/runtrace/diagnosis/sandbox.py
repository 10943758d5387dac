"""In-process executor for classified diagnosis commands.

Commands have already passed static policy (see :mod:`.protocol`); the
sandbox adds effect-level guarantees:

* ``open`` resolves only the known artifact names inside the index
  directory; everything else raises ``PermissionError``.
* For an Inspect, ``steps.json`` is served as a view in which every step
  other than the declared one is reduced to ``{"step_id": n}``.
* Label writes are buffered and committed only if the final text is valid
  JSON matching the label schema; rejected writes leave the file untouched.
"""

from __future__ import annotations

import io
import json
import traceback
from pathlib import Path
from typing import Any

import jsonschema

from runtrace.diagnosis.protocol import (
    READABLE_FILES,
    Command,
    ExecResult,
    Executor,
    Finalize,
    Forbidden,
    InitWrite,
    Inspect,
    SandboxFailure,
    Write,
    labels_from_json,
)
from runtrace.model import LABELS_FILE, STEPS_FILE, dump_json

_STEP_IDS = {"type": "array", "items": {"type": "integer", "minimum": 1}, "uniqueItems": True}

LABELS_SCHEMA: dict[str, Any] = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "stage_id": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
            "incorrect_step_ids": _STEP_IDS,
            "unuseful_step_ids": _STEP_IDS,
            "reasoning": {"type": "string"},
        },
        "required": ["stage_id", "incorrect_step_ids", "unuseful_step_ids", "reasoning"],
        "additionalProperties": False,
    },
}

_SAFE_BUILTINS = {
    name: __builtins__[name] if isinstance(__builtins__, dict) else getattr(__builtins__, name)
    for name in (
        "abs", "all", "any", "bool", "dict", "enumerate", "filter", "float", "int", "isinstance", "len",
        "list", "map", "max", "min", "next", "range", "repr", "reversed", "round", "set", "sorted", "str",
        "sum", "tuple", "zip", "Exception", "KeyError", "IndexError", "StopIteration", "TypeError",
        "ValueError",
    )
}


def label_schema_errors(text: str) -> list[str]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        return [f"not valid JSON: {exc.msg} at char {exc.pos}"]
    validator = jsonschema.Draft202012Validator(LABELS_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]


class _WriteBuffer(io.StringIO):
    def __init__(self, sink: list[str]) -> None:
        super().__init__()
        self._sink = sink

    def close(self) -> None:
        if not self.closed:
            self._sink.append(self.getvalue())
        super().close()


class RunDirSandbox(Executor):
    """Executes commands against one index directory (``steps.json``, ``tree.md``, ...)."""

    def __init__(self, index_dir: Path) -> None:
        self.index_dir = Path(index_dir)
        try:
            self._steps = json.loads((self.index_dir / STEPS_FILE).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SandboxFailure(f"cannot load {STEPS_FILE}: {exc}") from exc

    @property
    def labels_path(self) -> Path:
        return self.index_dir / LABELS_FILE

    def steps_view(self, step_id: int | None) -> str:
        view = [s if s.get("step_id") == step_id else {"step_id": s.get("step_id")} for s in self._steps]
        return json.dumps(view, ensure_ascii=False)

    def run(self, cmd: Command) -> ExecResult:
        if isinstance(cmd, (Finalize, Forbidden)):
            raise SandboxFailure(f"{type(cmd).__name__} is not executable")
        code = cmd.code
        inspect_id = cmd.step_id if isinstance(cmd, Inspect) else None
        writes: list[str] = []
        buffers: list[_WriteBuffer] = []

        def guarded_open(file: Any, mode: str = "r", *args: Any, **kwargs: Any) -> io.StringIO:
            name = str(file)
            if mode == "w" and name == LABELS_FILE and not isinstance(cmd, Inspect):
                buffers.append(_WriteBuffer(writes))
                return buffers[-1]
            if mode != "r" or name not in READABLE_FILES:
                raise PermissionError(f"access to {name!r} (mode {mode!r}) is not allowed")
            if name == STEPS_FILE:
                return io.StringIO(self.steps_view(inspect_id))
            path = self.index_dir / name
            if not path.exists():
                raise FileNotFoundError(name)
            return io.StringIO(path.read_text(encoding="utf-8"))

        def guarded_import(name: str, *args: Any, **kwargs: Any) -> Any:
            if name != "json":
                raise ImportError(f"import of {name} is not allowed")
            return json

        out = io.StringIO()

        def local_print(*args: Any, sep: str = " ", end: str = "\n", **_: Any) -> None:
            # bound to this call's buffer so concurrent sessions never share stdout
            out.write(sep.join(str(a) for a in args) + end)

        env = {
            "__builtins__": {
                **_SAFE_BUILTINS,
                "open": guarded_open,
                "print": local_print,
                "__import__": guarded_import,
            }
        }
        returncode = 0
        try:
            exec(compile(code, "<command>", "exec"), env)  # noqa: S102 - code passed static policy
        except Exception as exc:  # the command's own failure, reported like a shell would
            tb = traceback.format_exception_only(type(exc), exc)
            out.write("Traceback (most recent call last):\n" + "".join(tb))
            returncode = 1
        # one-liners rarely close their handles; flush them here
        for buf in buffers:
            buf.close()
        text_written = writes[-1] if writes else None
        if returncode != 0 or not isinstance(cmd, (InitWrite, Write)):
            return ExecResult(returncode, out.getvalue())
        return self._commit(text_written, out.getvalue())

    def _commit(self, text: str | None, output: str) -> ExecResult:
        if text is None:
            return ExecResult(1, output + f"no content was written to {LABELS_FILE}\n")
        errors = label_schema_errors(text)
        if errors:
            detail = "\n".join(errors)
            return ExecResult(1, output + f"{LABELS_FILE} rejected, file left unchanged:\n{detail}\n")
        labels = labels_from_json(json.loads(text))
        self.labels_path.write_text(dump_json([v.to_dict() for v in labels]), encoding="utf-8")
        return ExecResult(0, output, labels)
