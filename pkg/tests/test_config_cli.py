from __future__ import annotations

import json

import pytest

from runtrace import __version__
from runtrace.cli import main
from runtrace.config import ConfigError, ToolConfig, load_config
from runtrace.evaluation import GoldMode


def _toml(tmp_path, text):
    path = tmp_path / "tracer.toml"
    path.write_text(text)
    return path


def test_defaults():
    cfg = load_config(env={})
    assert cfg == ToolConfig()
    assert cfg.max_turns == 50 and cfg.max_tokens == 200_000


def test_layering(tmp_path):
    path = _toml(tmp_path, 'registry_path = "reg.json"\n[model]\nurl = "http://file"\n[budget]\nmax_turns = 7\n'
                           '[weights]\nregression = 9\n[evaluation]\ngold_mode = "incorrect"\npred_cap = 4\n')
    cfg = load_config(path, env={"TRACER_MODEL_URL": "http://env"}, overrides={"max_turns": 3, "max_tokens": None})
    assert cfg.model_url == "http://env"
    assert cfg.max_turns == 3 and cfg.max_tokens == 200_000
    assert cfg.weights.regression == 9.0 and cfg.gold_mode is GoldMode.INCORRECT and cfg.pred_cap == 4
    assert cfg.registry_path == tmp_path / "reg.json"
    assert load_config(env={"TRACER_CONFIG": str(path)}).max_turns == 7


@pytest.mark.parametrize(
    "text, key",
    [
        ("[budget]\nmax_turns = -1\n", "budget.max_turns"),
        ("[budget]\nmax_turns = \"ten\"\n", "budget.max_turns"),
        ("[budget]\nturns = 3\n", "budget.turns"),
        ("[weights]\ndiff_scale = 0\n", "weights.diff_scale"),
        ("[evaluation]\ngold_mode = \"both\"\n", "evaluation.gold_mode"),
        ("colour = \"red\"\n", "colour"),
        ("[model]\nurl = \n", "url"),
    ],
)
def test_config_errors_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigError) as info:
        load_config(_toml(tmp_path, text), env={})
    assert info.value.key == key


def test_key_never_in_dict(monkeypatch):
    monkeypatch.setenv("TRACER_MODEL_KEY", "sk-very-secret")
    d = json.dumps(load_config(env={}).to_dict())
    assert "sk-very-secret" not in d and '"key_set": true' in d


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_usage_errors(capsys, monkeypatch):
    monkeypatch.delenv("TRACER_MODEL_URL", raising=False)
    code, _, err = _run(capsys, "frobnicate")
    assert code == 2 and json.loads(err)["error"] == "UsageError"
    code, _, err = _run(capsys)
    assert code == 2


def test_cli_config_error(tmp_path, capsys):
    path = _toml(tmp_path, "[budget]\nmax_tokens = 0\n")
    code, _, err = _run(capsys, "--config", str(path), "synth", "--out", str(tmp_path / "x"))
    assert code == 2 and json.loads(err)["key"] == "budget.max_tokens"


def test_cli_synth_infeasible(tmp_path, capsys):
    code, _, err = _run(capsys, "synth", "--plant", "mislocalized_edit:1:1", "--out", str(tmp_path / "x"))
    assert code == 2 and json.loads(err)["error"] == "InfeasibleConfig"


def test_cli_flow(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("TRACER_MODEL_URL", raising=False)
    monkeypatch.setenv("TRACER_MODEL_KEY", "sk-hidden")
    run = tmp_path / "run"
    code, out, _ = _run(capsys, "synth", "--seed", "5", "--steps", "20", "--plant", "mislocalized_edit:4:1",
                        "--plan", "environment_verification,dependency_installation,inspection_debugging,patching",
                        "--out", str(run))
    assert code == 0 and json.loads(out)["n_steps"] == 20

    code, out, _ = _run(capsys, "extract", str(run))
    assert code == 0 and json.loads(out)["filter"]["decision"] == "retained"

    code, out, _ = _run(capsys, "index", str(run))
    assert code == 0 and (run / "trace" / "tree.md").exists()

    code, _, err = _run(capsys, "diagnose", str(run))
    assert code == 2 and json.loads(err)["key"] == "model.url"

    code, out, _ = _run(capsys, "diagnose", str(run), "--heuristic")
    assert code == 0
    report = json.loads((run / "trace" / "diagnosis.json").read_text())
    assert report["tool"]["version"] == __version__ and report["config"]["model"]["key_set"] is True
    assert "sk-hidden" not in (run / "trace" / "diagnosis.json").read_text()

    code, out, _ = _run(capsys, "replay-hint", str(run))
    assert code == 0 and (run / "trace" / "replay_hint.txt").exists()

    code, out, _ = _run(capsys, "evaluate", "--pred", str(run), "--gold", str(run), "--stratify", "difficulty,stage")
    assert code == 0 and json.loads(out)["macro"]["f1"] == 1.0
    saved = json.loads((run / "report.json").read_text())
    assert set(saved["views"]["union"]["strata"]) == {"difficulty", "stage"}
    assert len((run / "report.jsonl").read_text().splitlines()) == 1

    code, _, err = _run(capsys, "evaluate", "--pred", str(run), "--gold", str(run), "--stratify", "mood")
    assert code == 2


def test_cli_pipeline_reports_and_rejections(tmp_path, capsys):
    ok, short = tmp_path / "ok", tmp_path / "short"
    _run(capsys, "synth", "--seed", "2", "--plant", "mislocalized_edit:4:2", "--plan",
         "environment_verification,dependency_installation,inspection_debugging,patching", "--out", str(ok))
    _run(capsys, "synth", "--seed", "3", "--archetype", "short_correct", "--plan",
         "environment_verification,inspection_debugging,patching,verification", "--out", str(short))
    empty = tmp_path / "empty"
    empty.mkdir()
    code, out, err = _run(capsys, "pipeline", "--heuristic", "--jobs", "2", str(ok), str(short), str(empty))
    assert code == 1
    summary = {r["run_dir"]: r for r in json.loads(out)}
    assert summary[str(ok)]["status"] == "ok"
    assert summary[str(short)]["status"] == "rejected"
    assert summary[str(short)]["filter"]["reason"] == "short_correct"
    assert summary[str(empty)]["error"]["error"] == "NoStepArtifact"
    report = json.loads((ok / "trace" / "trace_report.json").read_text())
    assert report["replay"]["budget"]["max_iterations"] == report["index"]["steps"]
    assert (ok / "trace" / "replay_budget.json").exists()
    assert not (short / "trace" / "mini_tracer_labels.json").exists()


def test_cli_registry_is_persisted(tmp_path, capsys):
    run = tmp_path / "wrapped"
    run.mkdir()
    doc = {"trajectory": [{"step_id": 1, "action_ref": {"content": "ls"}, "observation_ref": None, "extra": 1}]}
    (run / "run.traj").write_text(json.dumps(doc))
    reg = tmp_path / "reg.json"
    code, out, _ = _run(capsys, "--registry", str(reg), "extract", str(run))
    assert code == 0 and json.loads(out)["registered"] is True
    code, out, _ = _run(capsys, "--registry", str(reg), "extract", str(run))
    assert json.loads(out)["registered"] is False
    assert len(json.loads(reg.read_text())) == 3


def test_cli_model_diagnosis_with_mock_endpoint(tmp_path, capsys, monkeypatch):
    import httpx

    import runtrace.cli as cli
    from _support import INIT, inspect
    from runtrace.diagnosis import HttpModelClient
    from runtrace.diagnosis.clients import bash
    from runtrace.diagnosis.protocol import FINALIZE_COMMAND

    run = tmp_path / "run"
    _run(capsys, "synth", "--seed", "4", "--steps", "16", "--plant", "mislocalized_edit:4:1", "--plan",
         "environment_verification,dependency_installation,inspection_debugging,patching", "--out", str(run))
    _run(capsys, "index", str(run))
    replies = iter([bash(INIT), bash(inspect(1)), bash(FINALIZE_COMMAND)])

    def handler(request):
        return httpx.Response(200, json={"text": next(replies), "usage": {"prompt_tokens": 7, "completion_tokens": 3}})

    monkeypatch.setattr(cli, "HttpModelClient",
                        lambda url, key: HttpModelClient(url, key, transport=httpx.MockTransport(handler)))
    monkeypatch.setenv("TRACER_MODEL_URL", "http://model.test")
    monkeypatch.setenv("TRACER_MODEL_KEY", "sk-never-print")
    code, out, err = _run(capsys, "diagnose", str(run), "--max-turns", "5")
    # one inspected stage out of four is not enough to finalize
    assert code == 1 and json.loads(err)["violation"] == "insufficient_coverage"
    report = (run / "trace" / "diagnosis.json").read_text()
    assert "sk-never-print" not in report and "sk-never-print" not in out + err
    data = json.loads(report)
    assert data["status"] == "violated" and data["diagnosis_cost"] == 30
    assert data["config"]["budget"]["max_turns"] == 5
