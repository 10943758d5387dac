"""Command-line entry point.

Exit codes: 0 success, 1 validation or protocol failure, 2 configuration or
usage error. Failures are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from runtrace import __version__
from runtrace.config import ConfigError, ToolConfig, load_config
from runtrace.diagnosis import (
    Budget,
    BudgetExhausted,
    ClientFailure,
    HttpModelClient,
    heuristic_diagnose,
    run_diagnosis,
)
from runtrace.evaluation import (
    REPORT_FILE,
    REPORT_LINES_FILE,
    GoldMode,
    NoScoreableInstances,
    Stratum,
    evaluate_dirs,
    token_account,
)
from runtrace.extraction import (
    INDEX_DIRNAME,
    DescriptorMismatch,
    Extraction,
    MalformedArtifact,
    NoStepArtifact,
    ParserRegistry,
    apply_filters,
    discover_layout,
    extract,
    read_task_text,
    register_parser,
    select_parser,
    synthesize_descriptor,
)
from runtrace.model import (
    GOLD_FILE,
    LABELS_FILE,
    META_FILE,
    STAGE_RANGES_FILE,
    STEPS_FILE,
    TASK_FILE,
    DiagnosisResult,
    GoldAnnotation,
    StageSegmentation,
    load_trajectory,
    read_json,
    write_json,
)
from runtrace.replay import EmptyDiagnosis, render_hint, write_replay
from runtrace.synth import Archetype, Dialect, InfeasibleConfig, PlantSpec, SynthConfig, generate
from runtrace.tree import IoFailure, LengthMismatch, emit_artifacts, index_trajectory, load_artifacts

log = logging.getLogger("runtrace")

DIAGNOSIS_FILE = "diagnosis.json"
TRACE_REPORT_FILE = "trace_report.json"


class UsageError(Exception):
    pass


class RunFailure(Exception):
    """A validation or protocol failure; the command exits with 1."""

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _header(cfg: ToolConfig) -> dict[str, Any]:
    return {"tool": {"name": "runtrace", "version": __version__}, "config": cfg.to_dict()}


def _emit(data: Any) -> None:
    print(json.dumps(data, ensure_ascii=False, indent=2))


# ---------------------------------------------------------------------------
# helpers shared by subcommands


def _registry(cfg: ToolConfig) -> ParserRegistry:
    path = cfg.registry_path
    if path is not None and path.exists():
        try:
            return ParserRegistry.load(path)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("registry_path", f"unreadable parser registry {path}: {exc}") from exc
    return ParserRegistry.with_builtins()


def _save_registry(cfg: ToolConfig, reg: ParserRegistry) -> None:
    if cfg.registry_path is not None:
        cfg.registry_path.parent.mkdir(parents=True, exist_ok=True)
        reg.save(cfg.registry_path)


def _out_dir(cfg: ToolConfig, run_dir: Path, flag: str | None) -> Path:
    if flag:
        return Path(flag)
    if cfg.output_root is not None:
        return cfg.output_root / run_dir.resolve().name
    return run_dir / INDEX_DIRNAME


def _index_dir(path: Path) -> Path:
    """Accept either an index directory or a run directory holding one."""
    for candidate in (path, path / INDEX_DIRNAME):
        if (candidate / STEPS_FILE).exists() and (candidate / STAGE_RANGES_FILE).exists():
            return candidate
    raise RunFailure(f"no index found at {path}; run 'runtrace index' first", path=str(path))


def _gold_segmentation(run_dir: Path) -> StageSegmentation | None:
    path = run_dir / GOLD_FILE
    if not path.exists():
        return None
    return GoldAnnotation.from_dict(read_json(path)).segmentation


def _write_index(x: Extraction, run_dir: Path, out: Path) -> dict[str, Any]:
    t = x.trajectory
    kinds, tree, seg = index_trajectory(t, _gold_segmentation(run_dir))
    emit_artifacts(tree, seg, t, out)
    (out / TASK_FILE).write_text(read_task_text(run_dir, x.layout), encoding="utf-8")
    write_json(out / META_FILE, t.meta_to_dict())
    return {"steps": len(t.steps), "stages": seg.to_list(), "changes": sum(k.value == "change" for k in kinds)}


def _heuristic(index_dir: Path, cfg: ToolConfig) -> tuple[DiagnosisResult, dict[str, Any]]:
    _, tree, seg = load_artifacts(index_dir)
    t = load_trajectory(index_dir)
    result = heuristic_diagnose(t, tree, seg, tree.kinds, cfg.weights)
    return result, {"mode": "heuristic", "status": "ok", "diagnosis_cost": 0}


def _model(index_dir: Path, cfg: ToolConfig) -> tuple[DiagnosisResult, dict[str, Any]]:
    if not cfg.model_url:
        raise ConfigError("model.url", "no model endpoint configured; set TRACER_MODEL_URL or pass --heuristic")
    client = HttpModelClient(cfg.model_url, cfg.model_key)
    budget = Budget(cfg.max_turns, cfg.max_tokens)
    try:
        result, state = run_diagnosis(index_dir, client, budget)
        status = "violated" if state.violation else "ok"
        info = {"status": status, "violation": state.violation}
    except BudgetExhausted as exc:
        result, state = exc.result, exc.state
        info = {"status": "budget_exhausted", "violation": str(exc)}
    finally:
        client.close()
    info.update(mode="model", diagnosis_cost=token_account(state).total, session=state.to_dict())
    return result, info


def _diagnose(index_dir: Path, cfg: ToolConfig, heuristic: bool) -> tuple[DiagnosisResult, dict[str, Any]]:
    result, info = (_heuristic if heuristic else _model)(index_dir, cfg)
    if info["mode"] == "heuristic":
        write_json(index_dir / LABELS_FILE, result.labels_to_list())
    report = {**_header(cfg), **info, "result": result.to_dict()}
    write_json(index_dir / DIAGNOSIS_FILE, report)
    return result, report


def _replay(index_dir: Path, result: DiagnosisResult, cost: int) -> dict[str, Any]:
    t = load_trajectory(index_dir)
    seg = StageSegmentation.from_list(read_json(index_dir / STAGE_RANGES_FILE))
    task_path = index_dir / TASK_FILE
    task = task_path.read_text(encoding="utf-8") if task_path.exists() else ""
    pkg = render_hint(result, task, t, seg, diagnosis_cost=cost)
    hint_path, budget_path = write_replay(pkg, index_dir)
    return {"hint": str(hint_path), "budget": pkg.budget_dict(), "hint_chars": len(pkg.hint)}


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args: argparse.Namespace, cfg: ToolConfig) -> int:
    run_dir = Path(args.run_dir)
    x = extract(run_dir, _registry(cfg))
    if x.registered:
        _save_registry(cfg, x.registry)
    out = _out_dir(cfg, run_dir, args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / STEPS_FILE, x.trajectory.steps_to_list())
    write_json(out / META_FILE, x.trajectory.meta_to_dict())
    (out / TASK_FILE).write_text(read_task_text(run_dir, x.layout), encoding="utf-8")
    _emit({
        "run_dir": str(run_dir),
        "out": str(out),
        "steps": len(x.trajectory.steps),
        "parser": x.descriptor.name,
        "fingerprint": x.layout.format_fingerprint,
        "registered": x.registered,
        "filter": apply_filters(x.trajectory).to_dict(),
    })
    return 0


def cmd_index(args: argparse.Namespace, cfg: ToolConfig) -> int:
    run_dir = Path(args.run_dir)
    x = extract(run_dir, _registry(cfg))
    if x.registered:
        _save_registry(cfg, x.registry)
    out = _out_dir(cfg, run_dir, args.out)
    summary = _write_index(x, run_dir, out)
    _emit({"run_dir": str(run_dir), "out": str(out), **summary})
    return 0


def cmd_diagnose(args: argparse.Namespace, cfg: ToolConfig) -> int:
    index_dir = _index_dir(Path(args.run_dir))
    result, report = _diagnose(index_dir, cfg, args.heuristic)
    _emit({"index_dir": str(index_dir), "status": report["status"], "labels": result.labels_to_list()})
    if report["status"] != "ok":
        raise RunFailure(f"diagnosis did not complete cleanly: {report['status']}", violation=report.get("violation"))
    return 0


def cmd_evaluate(args: argparse.Namespace, cfg: ToolConfig) -> int:
    stratify = [s for part in args.stratify for s in part.split(",") if s]
    for s in stratify:
        if s not in {m.value for m in Stratum}:
            raise UsageError(f"unknown stratum {s!r}; choose from {[m.value for m in Stratum]}")
    report = evaluate_dirs(Path(args.pred), Path(args.gold), stratify, cfg.gold_mode, cfg.pred_cap)
    out = Path(args.out) if args.out else Path(args.pred)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / REPORT_FILE, {**_header(cfg), **report.to_dict()})
    lines = [json.dumps(s.to_dict(), ensure_ascii=False) for s in report.report.per_instance]
    (out / REPORT_LINES_FILE).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    _emit({"macro": report.report.macro_prf.to_dict(), "instances": len(report.report.per_instance),
           "excluded": list(report.report.excluded), "report": str(out / REPORT_FILE)})
    return 0


def _steps_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    try:
        bounds = (int(lo), int(hi or lo))
    except ValueError as exc:
        raise UsageError(f"--steps expects N or LO:HI, got {text!r}") from exc
    if bounds[0] <= 0 or bounds[0] > bounds[1]:
        raise UsageError(f"--steps range {text!r} is empty")
    return bounds


def cmd_synth(args: argparse.Namespace, cfg: ToolConfig) -> int:
    plan: dict[str, Any] = {}
    if args.plan:
        plan["stage_plan"] = tuple(args.plan.split(","))
    base = dict(
        steps=_steps_range(args.steps),
        plant=PlantSpec.parse(args.plant) if args.plant else None,
        noise=args.noise,
        dialect=Dialect(args.dialect),
        archetype=Archetype(args.archetype),
        **plan,
    )
    out = Path(args.out)
    written = []
    for i in range(args.count):
        seed = args.seed + i
        target = out if args.count == 1 else out / f"run_{seed:05d}"
        try:
            synth_cfg = SynthConfig(seed=seed, task_id=f"synth-{seed:05d}", **base)
        except ValueError as exc:
            raise InfeasibleConfig(str(exc)) from exc
        path, gold = generate(synth_cfg, target)
        written.append({"run_dir": str(path), "n_steps": gold.n_steps, "outcome": gold.outcome.value,
                        "error_critical_step": gold.error_critical_step})
    _emit(written[0] if args.count == 1 else written)
    return 0


def cmd_replay(args: argparse.Namespace, cfg: ToolConfig) -> int:
    index_dir = _index_dir(Path(args.run_dir))
    labels_path = index_dir / LABELS_FILE
    if not labels_path.exists():
        raise RunFailure(f"no {LABELS_FILE} in {index_dir}; run 'runtrace diagnose' first")
    result = DiagnosisResult.from_labels(read_json(labels_path))
    diag_path = index_dir / DIAGNOSIS_FILE
    cost = int(read_json(diag_path).get("diagnosis_cost", 0)) if diag_path.exists() else 0
    _emit(_replay(index_dir, result, cost))
    return 0


@dataclass
class _Prepared:
    run_dir: Path
    extraction: Extraction | None = None
    error: dict[str, Any] | None = None


def _pipeline_one(prep: _Prepared, cfg: ToolConfig, heuristic: bool) -> dict[str, Any]:
    run_dir = prep.run_dir
    out = _out_dir(cfg, run_dir, None)
    report: dict[str, Any] = {**_header(cfg), "run_dir": str(run_dir), "out": str(out)}
    if prep.error is not None:
        return {**report, "status": "failed", "error": prep.error}
    x = prep.extraction
    assert x is not None
    try:
        report["extraction"] = {"parser": x.descriptor.name, "fingerprint": x.layout.format_fingerprint,
                                "registered": x.registered}
        report["index"] = _write_index(x, run_dir, out)
        verdict = apply_filters(x.trajectory)
        report["filter"] = verdict.to_dict()
        if not verdict.retained:
            report["status"] = "rejected"
            return report
        result, diag = _diagnose(out, cfg, heuristic)
        report["diagnosis"] = {k: diag[k] for k in ("mode", "status", "diagnosis_cost")}
        report["labels"] = result.labels_to_list()
        if diag["status"] != "ok":
            report["status"] = "failed"
            report["error"] = {"error": "DiagnosisIncomplete", "message": str(diag.get("violation"))}
        elif result.is_empty:
            report["status"] = "ok"
            report["replay"] = None
        else:
            report["replay"] = _replay(out, result, diag["diagnosis_cost"])
            report["status"] = "ok"
    except (RunFailure, EmptyDiagnosis, LengthMismatch, IoFailure, ClientFailure, ValueError) as exc:
        report["status"] = "failed"
        report["error"] = _error_record(exc)
    finally:
        if out.exists():
            write_json(out / TRACE_REPORT_FILE, report)
    return report


def cmd_pipeline(args: argparse.Namespace, cfg: ToolConfig) -> int:
    if not args.heuristic and not cfg.model_url:
        raise ConfigError("model.url", "no model endpoint configured; set TRACER_MODEL_URL or pass --heuristic")
    if args.jobs <= 0:
        raise UsageError("--jobs must be positive")
    # Parser registration happens here, serially, so the registry has one writer.
    reg = _registry(cfg)
    changed = False
    prepared = []
    for raw in args.run_dirs:
        run_dir = Path(raw)
        try:
            layout = discover_layout(run_dir)
            if select_parser(layout, reg) is None:
                reg = register_parser(reg, synthesize_descriptor(layout))
                changed = True
            prepared.append(_Prepared(run_dir))
        except (NoStepArtifact, MalformedArtifact, DescriptorMismatch, OSError) as exc:
            prepared.append(_Prepared(run_dir, error=_error_record(exc)))
    if changed:
        _save_registry(cfg, reg)

    def run(prep: _Prepared) -> dict[str, Any]:
        if prep.error is None:
            try:
                prep.extraction = extract(prep.run_dir, reg)
            except (NoStepArtifact, MalformedArtifact, DescriptorMismatch, OSError, ValueError) as exc:
                prep.error = _error_record(exc)
        return _pipeline_one(prep, cfg, args.heuristic)

    if args.jobs == 1:
        reports = [run(p) for p in prepared]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run, prepared))
    summary = [{"run_dir": r["run_dir"], "status": r["status"], "filter": r.get("filter"),
                "labels": r.get("labels"), "error": r.get("error")} for r in reports]
    _emit(summary)
    failed = [r for r in reports if r["status"] == "failed"]
    if failed:
        raise RunFailure(f"{len(failed)} of {len(reports)} runs failed", runs=[r["run_dir"] for r in failed])
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="runtrace", description="Trace, diagnose and evaluate code-agent runs.")
    p.add_argument("--version", action="version", version=f"runtrace {__version__}")
    p.add_argument("--config", help="TOML config file (else $TRACER_CONFIG)")
    p.add_argument("--registry", help="parser registry JSON file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("extract", help="normalize a run directory into steps.json")
    s.add_argument("run_dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("index", help="extract and build the tree and stage ranges")
    s.add_argument("run_dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("diagnose", help="label the failure-responsible stage of an indexed run")
    s.add_argument("run_dir")
    s.add_argument("--heuristic", action="store_true", help="use the deterministic scorer, no model")
    s.add_argument("--max-turns", type=int)
    s.add_argument("--max-tokens", type=int)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("evaluate", help="score predicted labels against gold labels")
    s.add_argument("--pred", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--stratify", action="append", default=[], help="difficulty, category, stage (repeatable)")
    s.add_argument("--gold-mode", choices=[m.value for m in GoldMode])
    s.add_argument("--cap", type=int, help="score at most this many predicted steps per instance")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="generate synthetic runs with planted faults")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", default="12:30", help="N or LO:HI")
    s.add_argument("--plant", help="<error_type>:<stage_idx>:<len>")
    s.add_argument("--plan", help="comma-separated stage names")
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--dialect", choices=[d.value for d in Dialect], default=Dialect.STEPS.value)
    s.add_argument("--archetype", choices=[a.value for a in Archetype], default=Archetype.NORMAL.value)
    s.add_argument("--count", type=int, default=1, help="number of runs; seeds increase from --seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("replay-hint", help="render the replay hint for a diagnosed run")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("pipeline", help="extract, index, filter, diagnose and render hints")
    s.add_argument("run_dirs", nargs="+")
    s.add_argument("--heuristic", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--max-turns", type=int)
    s.add_argument("--max-tokens", type=int)
    s.set_defaults(func=cmd_pipeline)
    return p


def _error_record(exc: BaseException) -> dict[str, Any]:
    record: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        record["key"] = exc.key
    if isinstance(exc, MalformedArtifact):
        record["path"], record["offset"] = str(exc.path), exc.offset
    if isinstance(exc, RunFailure):
        record.update(exc.details)
    return record


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps(_error_record(exc), ensure_ascii=False), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        overrides = {
            "registry_path": args.registry,
            "max_turns": getattr(args, "max_turns", None),
            "max_tokens": getattr(args, "max_tokens", None),
            "gold_mode": getattr(args, "gold_mode", None),
            "pred_cap": getattr(args, "cap", None),
        }
        cfg = load_config(args.config, overrides=overrides)
        return args.func(args, cfg)
    except (ConfigError, UsageError, InfeasibleConfig) as exc:
        return _fail(exc, 2)
    except (RunFailure, NoStepArtifact, MalformedArtifact, DescriptorMismatch, LengthMismatch, EmptyDiagnosis,
            NoScoreableInstances, ClientFailure, IoFailure) as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
