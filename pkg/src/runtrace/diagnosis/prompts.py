"""Prompt text for model-backed diagnosis sessions."""

from __future__ import annotations

from runtrace.diagnosis.protocol import FINALIZE_COMMAND
from runtrace.model import LABELS_FILE, STAGE_RANGES_FILE, STEPS_FILE, TREE_FILE

SYSTEM_PROMPT = f"""\
You review a finished run of a coding agent and point out the steps that sent it off course.

Reply format: a short paragraph of reasoning followed by one fenced block that opens
with ```bash on its own line, holds one single-line command, and closes with ``` on
its own line. Replies with zero or several blocks are rejected.

Every command is one of these four kinds:
1. Initialize the output file. Your first command must be exactly:
   python -c 'open("{LABELS_FILE}","w").write("[]")'
2. Look at one step. Load {STEPS_FILE} with json, select the single object whose
   "step_id" equals an integer literal, and print what you need from it. Only that
   step is visible to the command.
3. Update {LABELS_FILE}: read it, modify the list, and write the whole list back.
   Do not read {STEPS_FILE} in the same command.
4. Stop, by sending exactly: {FINALIZE_COMMAND}

Restrictions: only python -c with the json module; no &&, ||, pipes, redirections,
heredocs, def/class/for/while/if/with/try, or multi-line code.

{LABELS_FILE} holds a JSON array. Each entry has exactly the keys "stage_id"
(an inclusive [start, end] pair copied verbatim from {STAGE_RANGES_FILE}),
"incorrect_step_ids" (state-changing steps that were wrong given what the agent knew),
"unuseful_step_ids" (exploration steps that were redundant or went unused) and a
non-empty "reasoning" string.

Evidence rules: you may only label steps you have looked at in this session. Look at
steps from at least three different stages before stopping. If nothing is wrong,
leave the array empty, but look at one or more steps first.
"""


def initial_message(task_text: str, tree_text: str, stage_ranges_text: str) -> str:
    return (
        "## Task given to the agent\n\n"
        f"{task_text.strip() or '(no task statement was recorded)'}\n\n"
        f"## {TREE_FILE}\n\n{tree_text.strip()}\n\n"
        f"## {STAGE_RANGES_FILE}\n\n{stage_ranges_text.strip()}\n\n"
        f"The full step records are in {STEPS_FILE} in the working directory. "
        f"Write your findings to {LABELS_FILE}."
    )


def violation_message(detail: str) -> str:
    return f"Command refused: {detail}. The session has ended."
