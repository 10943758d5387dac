"""Acceptance suite: one test per criterion, each timed against its limit."""

from __future__ import annotations

import json
import random
import subprocess
import sys

import pytest

import oracles
from _support import EDIT, GOLDEN, INIT, TEST, append_label, golden_trajectory, inspect, trajectory, write_index
from runtrace.diagnosis import Budget, ScriptedClient, heuristic_diagnose, run_diagnosis
from runtrace.diagnosis.clients import bash
from runtrace.diagnosis.protocol import FINALIZE_COMMAND, render_output
from runtrace.evaluation import Instance, budget_decomposition, error_stage_distribution, macro_aggregate, step_prf
from runtrace.extraction import RejectReason, apply_filters, extract
from runtrace.model import (
    DiagnosisResult,
    Outcome,
    StageVerdict,
    StepKind,
    StepRecord,
    Trajectory,
    dump_json,
    load_trajectory,
    read_json,
)
from runtrace.synth import (
    DI,
    P,
    Archetype,
    build,
    clean_config,
    filter_corpus_configs,
    generate_corpus,
    planted_configs,
)
from runtrace.tree import ROOT, build_tree, emit_artifacts, index_trajectory, load_artifacts

E, C = StepKind.EXPLORE, StepKind.CHANGE


# 1 -------------------------------------------------------------------------


def test_criterion_1_format_fidelity(tmp_path, criterion):
    with criterion(1, "format fidelity: 50 round trips and golden key names", 10):
        for i, cfg in enumerate(planted_configs(50, seed=11, noise=0.1)):
            run = build(cfg)
            t = run.trajectory
            kinds, tree, seg = index_trajectory(t)
            out = tmp_path / f"r{i}"
            emit_artifacts(tree, seg, t, out)
            steps, tree2, seg2 = load_artifacts(out)
            assert Trajectory.from_steps_list(steps).steps == t.steps
            assert seg2 == seg
            assert [(n.step_id, n.kind, n.parent, n.depth) for n in tree2] == \
                   [(n.step_id, n.kind, n.parent, n.depth) for n in tree]
            result = heuristic_diagnose(t, tree, seg, kinds)
            (out / "mini_tracer_labels.json").write_text(dump_json(result.labels_to_list()))
            assert DiagnosisResult.from_labels(read_json(out / "mini_tracer_labels.json")).stages == result.stages

        t = golden_trajectory()
        _, tree, seg = index_trajectory(t)
        emit_artifacts(tree, seg, t, tmp_path / "golden")
        for name in ("steps.json", "stage_ranges.json", "tree.md"):
            assert (tmp_path / "golden" / name).read_bytes() == (GOLDEN / name).read_bytes(), name
        labels = DiagnosisResult((StageVerdict((2, 2), {2}, (), "The edit at step 2 broke a passing test."),))
        assert dump_json(labels.labels_to_list()).encode() == (GOLDEN / "mini_tracer_labels.json").read_bytes()
        assert load_trajectory(GOLDEN).steps == t.steps


# 2 -------------------------------------------------------------------------


def test_criterion_2_tree_invariants(criterion):
    rng = random.Random(2024)

    def check(kinds):
        t = Trajectory(tuple(StepRecord(i, "x") for i in range(1, len(kinds) + 1)))
        tree = build_tree(t, kinds)
        changes_before = 0
        last_change = ROOT
        for node, kind in zip(tree, kinds):
            assert node.parent < node.step_id
            assert node.parent == last_change
            assert node.depth == 1 + changes_before
            if kind is E:
                assert tree.children(node.step_id) == []
            else:
                changes_before += 1
                last_change = node.step_id
        return tree

    with criterion(2, "tree invariants on 1000 random kind sequences", 30):
        for _ in range(1000):
            n = rng.randint(1, 200)
            check([rng.choice([E, C]) for _ in range(n)])
        star = check([E] * 50)
        assert all(n.parent == ROOT and n.depth == 1 for n in star)
        chain = check([C] * 50)
        assert [n.parent for n in chain] == list(range(0, 50))


# 3 -------------------------------------------------------------------------

# stages: EV [1,1], DI [2,2], ID [3,4], P [5,6], V [7,7]
SESSION_ROWS = [
    ("which python", 0),
    ("pip install attrs", 0),
    ("cat src/a.py", 0),
    (TEST, 0, "3 passed"),
    (EDIT.format(mod="a"), 0, "(2 lines changed)"),
    (EDIT.format(mod="b"), 0, "(1 lines changed)"),
    (TEST, 1, "1 failed, 2 passed"),
]


def test_criterion_3_protocol_conformance(tmp_path, criterion):
    def session(replies, name, budget=Budget()):
        index = write_index(trajectory(SESSION_ROWS), tmp_path / name)
        return run_diagnosis(index, ScriptedClient([bash(r) if "```" not in r else r for r in replies]), budget)

    with criterion(3, "protocol conformance against scripted adversarial clients", 10):
        # skipping initialization
        _, state = session([inspect(3)], "init_skip")
        assert state.violation == "init_required"

        # two action blocks: format error with the count, then the session goes on
        double = f"Two.\n```bash\n{inspect(3)}\n```\n```bash\n{inspect(4)}\n```"
        _, state = session([INIT, double, inspect(1), inspect(3), inspect(7), FINALIZE_COMMAND], "double")
        assert state.transcript[1].action == "format_error" and "2 were found" in state.transcript[1].outcome
        assert state.violation is None

        # inspect fused with a write
        fused = ("""python -c 'import json; s=json.load(open("steps.json")); x=[a for a in s if a["step_id"]==3]; """
                 """open("mini_tracer_labels.json","w").write("[]")'""")
        _, state = session([INIT, fused], "fused")
        assert state.violation == "forbidden" and "inspect and write in one command" in state.transcript[-1].outcome

        # chaining
        _, state = session([INIT, f"{inspect(3)} && ls"], "chained")
        assert state.violation == "forbidden" and "chaining" in state.transcript[-1].outcome

        # labels naming a step that was never inspected
        _, state = session([INIT, inspect(1), inspect(3), inspect(7), append_label(5, 6, [6]), FINALIZE_COMMAND],
                           "uninspected")
        assert state.violation == "invalid_labels" and state.label_problems == ("EvidenceViolation(6)",)

        # finalizing after two of five stages
        _, state = session([INIT, inspect(1), inspect(3), FINALIZE_COMMAND], "coverage")
        assert state.violation == "insufficient_coverage"

        # a 12000-character observation, rendered head / elided count / tail
        text = "a" * 5000 + "b" * 2000 + "c" * 4999
        long_cmd = ("""python3 -c 'import json; steps=json.load(open("steps.json")); """
                    """s=next(x for x in steps if x["step_id"]==1); print("a"*5000+"b"*2000+"c"*4999)'""")
        _, state = session([INIT, long_cmd, FINALIZE_COMMAND], "long", Budget(max_turns=3))
        expected = (
            "<returncode>0</returncode>\n"
            "<warning>\nOutput exceeded the display limit; the middle part was dropped. "
            "Prefer commands with narrower output.\n</warning>\n"
            f"<output_head>\n{'a' * 5000}\n</output_head>\n"
            "<elided_chars>\n2000 characters elided\n</elided_chars>\n"
            f"<output_tail>\n{'c' * 4999}\n\n</output_tail>"
        )
        assert state.transcript[1].outcome == expected
        assert render_output(0, text + "\n") == expected


# 4 -------------------------------------------------------------------------


def test_criterion_4_metric_oracle(criterion):
    rng = random.Random(4)
    with criterion(4, "step PRF and macro aggregate match brute force on 500 instances", 10):
        assert (lambda s: (s.precision, s.recall, s.f1))(step_prf({3, 4}, {3, 4})) == (1.0, 1.0, 1.0)
        assert (lambda s: (s.precision, s.recall, s.f1))(step_prf({3, 4}, {4, 5})) == (0.5, 0.5, 0.5)
        assert (lambda s: (s.precision, s.recall, s.f1))(step_prf({1}, {2})) == (0.0, 0.0, 0.0)
        pairs = []
        for _ in range(500):
            universe = range(1, rng.randint(2, 60))
            pred = frozenset(rng.sample(universe, rng.randint(0, len(universe))))
            gold = frozenset(rng.sample(universe, rng.randint(1, len(universe))))
            pairs.append((pred, gold))
            got = step_prf(pred, gold)
            want = oracles.prf(pred, gold)
            for a, b in zip((got.precision, got.recall, got.f1), want):
                assert abs(a - float(b)) <= 1e-9
        report = macro_aggregate([Instance(f"i{k:03d}", p, g) for k, (p, g) in enumerate(pairs)])
        want = oracles.macro(pairs)
        got = report.macro_prf
        for a, b in zip((got.precision, got.recall, got.f1), want):
            assert abs(a - float(b)) <= 1e-9


# 5 -------------------------------------------------------------------------


def test_criterion_5_localization(criterion):
    with criterion(5, "heuristic recovers planted onset stage over 200 seeds", 60):
        misses = []
        for cfg in planted_configs(200, seed=5):
            run = build(cfg)
            kinds, tree, seg = index_trajectory(run.trajectory)
            result = heuristic_diagnose(run.trajectory, tree, seg, kinds)
            if result.is_empty or result.stages[0].stage_id != run.gold.failure_stage().bounds:
                misses.append(cfg.seed)
        assert misses == []
        for seed in range(200):
            run = build(clean_config(seed))
            kinds, tree, seg = index_trajectory(run.trajectory)
            assert heuristic_diagnose(run.trajectory, tree, seg, kinds).is_empty, seed
        # identical spans on both sides of an edit tie; the earlier one wins
        t = trajectory([("cat a.py", 0), (EDIT.format(mod="a"), 0), ("cat a.py", 0), (TEST, 1, "1 failed")])
        kinds, tree, seg = index_trajectory(t)
        assert heuristic_diagnose(t, tree, seg, kinds).stages[0].stage_id == (1, 1)


# 6 -------------------------------------------------------------------------

EXPECTED_REASON = {
    Archetype.NORMAL: None,
    Archetype.SHORT_UNSOLVED: None,
    Archetype.SHORT_CORRECT: RejectReason.SHORT_CORRECT,
    Archetype.TIMEOUT: RejectReason.TIMEOUT,
    Archetype.TRUNCATED: RejectReason.TRUNCATED_GENERATION,
    Archetype.ENV_CORRUPT: RejectReason.ENV_CORRUPT,
}


def test_criterion_6_filter_fidelity(tmp_path, criterion):
    configs = filter_corpus_configs(6)
    with criterion(6, "filters reject exactly the planted archetypes in a 40-run corpus", 5):
        written = generate_corpus(configs, tmp_path)
        assert len(written) == 40
        for cfg, (path, _gold) in zip(configs, written):
            t = extract(path).trajectory
            verdict = apply_filters(t)
            assert verdict.reason is EXPECTED_REASON[cfg.archetype], (cfg.task_id, cfg.archetype, verdict)
            if cfg.archetype is Archetype.SHORT_CORRECT:
                assert (t.outcome, len(t.steps)) == (Outcome.SOLVED, 9)
            if cfg.archetype is Archetype.SHORT_UNSOLVED:
                assert (t.outcome, len(t.steps)) == (Outcome.UNSOLVED, 9) and verdict.retained


# 7 -------------------------------------------------------------------------


def test_criterion_7_analytics(criterion):
    rates = {DI: 0.3, P: 0.7}
    with criterion(7, "budget fractions sum to 1 and stage distribution within 2%", 60):
        fixtures = [golden_trajectory()] + [build(c).trajectory for c in filter_corpus_configs(7)[:20]]
        golds = []
        for cfg in planted_configs(500, seed=7, stage_rates=rates, noise=0.1):
            run = build(cfg)
            golds.append(run.gold)
            kinds = [k for k in index_trajectory(run.trajectory)[0]]
            d = budget_decomposition(kinds, run.gold.incorrect_step_ids | run.gold.unuseful_step_ids)
            assert abs(sum(d.as_tuple()) - 1.0) <= 1e-12
        for t in fixtures:
            kinds = index_trajectory(t)[0]
            for labeled in (set(), {1}, set(range(1, len(kinds) + 1))):
                assert abs(sum(budget_decomposition(kinds, labeled).as_tuple()) - 1.0) <= 1e-12
        shares = error_stage_distribution(golds).normalized()["unsolved"]
        for stage, rate in rates.items():
            assert abs(shares[stage.value] - rate) <= 0.02, (stage, shares)
        assert sum(shares.values()) == pytest.approx(1.0)


# 8 -------------------------------------------------------------------------


def _cli(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "runtrace", *args], capture_output=True, text=True)


def test_criterion_8_end_to_end(tmp_path, criterion):
    run = tmp_path / "run"
    with criterion(8, "synth -> pipeline --heuristic -> evaluate gives F1 = 1.0", 10):
        steps = [
            _cli("synth", "--seed", "8", "--steps", "24", "--noise", "0", "--plant", "mislocalized_edit:4:1",
                 "--plan", "environment_verification,dependency_installation,inspection_debugging,patching",
                 "--out", str(run)),
            _cli("pipeline", "--heuristic", str(run)),
            _cli("evaluate", "--pred", str(run), "--gold", str(run)),
        ]
        for proc in steps:
            assert proc.returncode == 0, proc.stderr
        assert json.loads(steps[-1].stdout)["macro"]["f1"] == 1.0
        assert (run / "trace" / "trace_report.json").exists()
