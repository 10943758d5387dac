from __future__ import annotations

import json
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import GOLDEN, golden_trajectory
from runtrace.extraction import (
    DescriptorMismatch,
    Dialect,
    DuplicateFingerprint,
    MalformedArtifact,
    NoStepArtifact,
    ParserRegistry,
    RejectReason,
    apply_filters,
    builtin_descriptors,
    discover_layout,
    extract,
    fingerprint,
    parse_and_normalize,
    read_task_text,
    register_parser,
    select_parser,
    synthesize_descriptor,
)
from runtrace.model import Outcome, RunFlag, StepRecord, Trajectory
from runtrace.synth import Archetype, PlantSpec, SynthConfig, build, write_run
from runtrace.synth import Dialect as SynthDialect


def _copy_golden(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    shutil.copy(GOLDEN / "steps.json", run / "steps.json")
    return run


def _chat(tmp_path, rows, name="log.jsonl", raw_tail=""):
    run = tmp_path / "chat"
    run.mkdir(exist_ok=True)
    text = "".join(json.dumps(r) + "\n" for r in rows) + raw_tail
    (run / name).write_text(text)
    return run


def test_canonical_directory(tmp_path):
    run = _copy_golden(tmp_path)
    layout = discover_layout(run)
    assert layout.dialect is Dialect.STEP_ARRAY and layout.steps_path == "steps.json"
    x = extract(run)
    assert not x.registered and x.descriptor.name == "canonical-steps"
    assert x.trajectory.steps == golden_trajectory().steps
    assert x.trajectory.task_id == "run"


def test_fingerprint_ignores_values_and_order():
    a = [{"step_id": 1, "action_ref": {"content": "ls"}, "observation_ref": None}]
    b = [{"observation_ref": None, "action_ref": {"content": "pwd"}, "step_id": 9}] * 3
    c = [{"step_id": 1, "action": "ls"}]
    assert fingerprint(a) == fingerprint(b) != fingerprint(c)


def test_no_step_artifact(tmp_path):
    (tmp_path / "notes.txt").write_text("hello")
    with pytest.raises(NoStepArtifact):
        discover_layout(tmp_path)


def test_malformed_reports_offset(tmp_path):
    rows = [{"role": "assistant", "content": "```bash\nls\n```"}]
    run = _chat(tmp_path, rows)
    (run / "log.jsonl").write_text(json.dumps(rows[0]) + "\n{broken\n" + json.dumps(rows[0]) + "\n")
    with pytest.raises(MalformedArtifact) as info:
        extract(run)
    # first line plus its newline, then one byte into "{broken"
    assert info.value.offset == len(json.dumps(rows[0])) + 2


def test_truncated_tail_sets_flag(tmp_path):
    rows = [
        {"role": "user", "content": "Fix it"},
        {"role": "assistant", "content": "Look.\n```bash\nls\n```"},
        {"role": "user", "content": "<returncode>0</returncode>\n<output>\na\n</output>"},
    ]
    run = _chat(tmp_path, rows, raw_tail='{"role": "assistant", "con')
    t = extract(run).trajectory
    assert RunFlag.TRUNCATED_GENERATION in t.run_flags
    assert [s.command for s in t.steps] == ["ls"]
    assert t.steps[0].returncode == 0 and t.steps[0].output == "a"


def test_chat_multi_block_and_timeout(tmp_path):
    rows = [
        {"role": "system", "content": "be brief"},
        {"role": "user", "content": "Fix the parser"},
        {"role": "assistant", "content": "Two things.\n```bash\nls\n```\nthen\n```bash\ncat a.py\n```",
         "usage": {"total_tokens": 50}},
        {"role": "user", "content": "<returncode>1</returncode>\n<output>\nno such file\n</output>"},
        {"role": "system", "content": "stopped", "exit_status": "TimeLimitExceeded"},
    ]
    run = _chat(tmp_path, rows)
    x = extract(run)
    t = x.trajectory
    assert [s.command for s in t.steps] == ["ls", "cat a.py"]
    assert t.steps[0].token_usage == 50 and t.steps[0].observation is None
    assert t.steps[1].returncode == 1
    assert RunFlag.TIMED_OUT in t.run_flags
    assert read_task_text(run, x.layout) == "Fix the parser"
    assert apply_filters(t).reason is RejectReason.TIMEOUT


def test_new_format_registers_once(tmp_path):
    doc = {"info": {"resolved": True}, "trajectory": [
        {"step_id": 1, "action_ref": {"content": "ls", "thought": "", "token_usage": 3},
         "observation_ref": {"content": "", "returncode": 0}, "ts": 1.0},
    ]}
    run = tmp_path / "wrapped"
    run.mkdir()
    (run / "run.traj").write_text(json.dumps(doc))
    reg = ParserRegistry.with_builtins()
    x = extract(run, reg)
    assert x.registered and len(x.registry) == len(reg) + 1
    assert x.trajectory.outcome is Outcome.SOLVED
    assert x.trajectory.steps[0].command == "ls"
    again = extract(run, x.registry)
    assert not again.registered and again.registry == x.registry
    assert len(reg) == 2  # the original registry is untouched


def test_registry_persistence(tmp_path):
    reg = ParserRegistry.with_builtins()
    path = tmp_path / "reg.json"
    reg.save(path)
    assert ParserRegistry.load(path) == reg
    with pytest.raises(DuplicateFingerprint):
        register_parser(reg, builtin_descriptors()[0])
    with pytest.raises(TypeError):
        reg.entries["x"] = None  # type: ignore[index]


def test_descriptor_mismatch(tmp_path):
    run = _copy_golden(tmp_path)
    chat = builtin_descriptors()[1]
    with pytest.raises(DescriptorMismatch):
        parse_and_normalize(run, chat)


def test_sidecars(tmp_path):
    run = _copy_golden(tmp_path)
    (run / "run_meta.json").write_text(json.dumps({"task_id": "T9", "outcome": "solved", "backbone_id": "m"}))
    (run / "run_flags.json").write_text(json.dumps({"env_corrupt": True}))
    t = extract(run).trajectory
    assert (t.task_id, t.outcome, t.backbone_id) == ("T9", Outcome.SOLVED, "m")
    assert t.run_flags == {RunFlag.ENV_CORRUPT}


def _t(n, outcome, flags=()):
    return Trajectory(tuple(StepRecord(i, "ls") for i in range(1, n + 1)), outcome=outcome, run_flags=flags)


@pytest.mark.parametrize(
    "t, reason",
    [
        (_t(9, Outcome.SOLVED), RejectReason.SHORT_CORRECT),
        (_t(9, Outcome.UNSOLVED), None),
        (_t(10, Outcome.SOLVED), None),
        (_t(30, Outcome.UNSOLVED, {RunFlag.TIMED_OUT, RunFlag.ENV_CORRUPT}), RejectReason.TIMEOUT),
        (_t(30, Outcome.UNSOLVED, {RunFlag.ENV_CORRUPT}), RejectReason.ENV_CORRUPT),
        (_t(3, Outcome.SOLVED, {RunFlag.TRUNCATED_GENERATION}), RejectReason.TRUNCATED_GENERATION),
    ],
)
def test_filters(t, reason):
    verdict = apply_filters(t)
    assert verdict.reason is reason and verdict.retained is (reason is None)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(list(SynthDialect)))
def test_both_dialects_extract_the_generated_run(tmp_path_factory, seed, dialect):
    cfg = SynthConfig(seed=seed, steps=(12, 25), plant=PlantSpec("mislocalized_edit", 4, 2), dialect=dialect,
                      stage_plan=("environment_verification", "dependency_installation", "inspection_debugging", "patching"))
    run = build(cfg)
    out = write_run(run, tmp_path_factory.mktemp("run"))
    t = extract(out).trajectory
    assert [s.to_dict() for s in t.steps] == [s.to_dict() for s in run.trajectory.steps]
    assert t.outcome is run.trajectory.outcome


def test_synthesized_descriptor_fields(tmp_path):
    run = _copy_golden(tmp_path)
    layout = discover_layout(run)
    desc = synthesize_descriptor(layout, name="custom")
    assert desc.fingerprint == layout.format_fingerprint
    assert select_parser(layout, ParserRegistry()) is None
    assert select_parser(layout, register_parser(ParserRegistry(), desc)) is desc


def test_archetype_flags(tmp_path):
    for arche, flag in [(Archetype.TIMEOUT, RunFlag.TIMED_OUT), (Archetype.TRUNCATED, RunFlag.TRUNCATED_GENERATION),
                        (Archetype.ENV_CORRUPT, RunFlag.ENV_CORRUPT)]:
        out = write_run(build(SynthConfig(seed=1, archetype=arche)), tmp_path / arche.value)
        assert flag in extract(out).trajectory.run_flags
