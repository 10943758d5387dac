"""Synthetic run directories with planted failure cascades and exact gold labels.

A run is built block by block from a stage plan: every block holds commands
whose decision-table stage equals the planned stage, so the gold
segmentation is exactly one span per block. When an error is planted:

* a passing check (the *baseline*) sits in the closest earlier
  inspection/verification block with no state change between it and the
  onset block;
* the onset is the last step of the onset block: a state change (edit or
  install) whose observation reports failure;
* a cascade of ``L`` steps follows, alternating failing checks and failing
  retries of the onset change on the same file or package, always ending
  with a failing check. Plan stages after the onset are not rendered;
  the cascade is the tail of the run.

Gold labels: the onset is incorrect and error-critical, cascade retries are
incorrect, cascade checks carry no label, and noise duplicates are unuseful.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from runtrace import commands
from runtrace.commands import Category
from runtrace.model import (
    GOLD_FILE,
    META_FILE,
    RUN_FLAGS_FILE,
    STEPS_FILE,
    TASK_FILE,
    ErrorType,
    GoldAnnotation,
    Observation,
    Outcome,
    StageLabel,
    StepKind,
    StepRecord,
    Trajectory,
    dump_json,
)
from runtrace.tree import classify_steps, segment_stages

EV = StageLabel.ENVIRONMENT_VERIFICATION
DI = StageLabel.DEPENDENCY_INSTALLATION
ID = StageLabel.INSPECTION_DEBUGGING
P = StageLabel.PATCHING
V = StageLabel.VERIFICATION

CANONICAL_PLAN = (EV, DI, ID, P, V)
TEST_COMMAND = "python -m pytest tests/ -q"
TRANSCRIPT_FILE = "agent_transcript.jsonl"
SHORT_RUN_STEPS = 9


class InfeasibleConfig(ValueError):
    pass


class Dialect(str, Enum):
    STEPS = "steps"
    TRANSCRIPT = "transcript"


class Archetype(str, Enum):
    NORMAL = "normal"
    SHORT_CORRECT = "short_correct"
    SHORT_UNSOLVED = "short_unsolved"
    TIMEOUT = "timeout"
    TRUNCATED = "truncated"
    ENV_CORRUPT = "env_corrupt"


@dataclass(frozen=True)
class PlantSpec:
    error_type: ErrorType
    onset_stage: int  # 1-based index into the stage plan
    cascade_length: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "error_type", ErrorType(self.error_type))

    @classmethod
    def parse(cls, text: str) -> PlantSpec:
        """``<error_type>:<stage_idx>:<len>``"""
        try:
            err, stage, length = text.split(":")
            return cls(ErrorType(err), int(stage), int(length))
        except ValueError as exc:
            raise InfeasibleConfig(f"bad plant spec {text!r}; expected <error_type>:<stage_idx>:<len>") from exc


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    steps: tuple[int, int] = (12, 30)
    stage_plan: tuple[StageLabel, ...] = CANONICAL_PLAN
    plant: PlantSpec | None = None
    noise: float = 0.0
    dialect: Dialect = Dialect.STEPS
    archetype: Archetype = Archetype.NORMAL
    category: str | None = None
    task_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_plan", tuple(StageLabel(s) for s in self.stage_plan))
        object.__setattr__(self, "dialect", Dialect(self.dialect))
        object.__setattr__(self, "archetype", Archetype(self.archetype))
        object.__setattr__(self, "steps", (int(self.steps[0]), int(self.steps[1])))


@dataclass(frozen=True)
class SynthRun:
    config: SynthConfig
    trajectory: Trajectory
    gold: GoldAnnotation
    task_text: str


# ---------------------------------------------------------------------------
# command templates

_PROBES = [
    ("python --version", "Python 3.11.6"),
    ("which python", "/usr/local/bin/python"),
    ("uname -a", "Linux sandbox 6.1.0 #1 SMP x86_64 GNU/Linux"),
    ("pip --version", "pip 23.3.1 from /usr/local/lib/python3.11/site-packages/pip (python 3.11)"),
    ("which pytest", "/usr/local/bin/pytest"),
    ("nproc", "8"),
    ("whoami", "agent"),
    ("df -h .", "Filesystem Size Used Avail Use% Mounted on\noverlay 100G 41G 59G 41% /"),
]
_PACKAGES = ["requests", "pyyaml", "attrs", "click", "packaging", "toml", "urllib3", "idna", "six", "tabulate"]
_MODULES = ["core", "parser", "config", "utils", "models", "cli", "io", "cache", "schema", "render",
            "loader", "client", "server", "hooks", "registry", "events", "errors", "format"]
_FUNCS = ["load", "parse", "resolve", "render", "merge", "validate", "dispatch", "encode", "flush", "lookup"]

_ONSET_TEXT = {
    ErrorType.ENV_SETUP: "environment check failed after the change: interpreter cannot locate site configuration",
    ErrorType.DEPENDENCY_RESOLUTION: "dependency conflict detected after the change",
    ErrorType.MISLOCALIZED_EDIT: "ImportError: cannot import name '{fn}' from 'pkg.{mod}'",
    ErrorType.INCORRECT_HYPOTHESIS: "post-edit check failed: TypeError in pkg.{mod}.{fn}",
    ErrorType.VERIFICATION_MISINTERPRETATION: "post-edit check failed: assertion mismatch in pkg.{mod}",
    ErrorType.UNPRODUCTIVE_LOOPING: "post-edit check failed: the same error persists in pkg.{mod}",
}


@dataclass
class _Builder:
    rng: random.Random
    steps: list[StepRecord] = field(default_factory=list)
    used_files: set[str] = field(default_factory=set)
    used_pkgs: set[str] = field(default_factory=set)
    counter: int = 0

    def add(self, command: str, output: str, rc: int, thought: str) -> int:
        sid = len(self.steps) + 1
        usage = self.rng.randint(150, 1800)
        self.steps.append(StepRecord(sid, command, thought, Observation(output, rc), usage))
        return sid

    def fresh_module(self) -> str:
        for mod in _MODULES:
            if mod not in self.used_files:
                self.used_files.add(mod)
                return mod
        self.counter += 1
        name = f"extra{self.counter}"
        self.used_files.add(name)
        return name

    def fresh_package(self) -> str:
        for pkg in _PACKAGES:
            if pkg not in self.used_pkgs:
                self.used_pkgs.add(pkg)
                return pkg
        self.counter += 1
        name = f"extra-dep{self.counter}"
        self.used_pkgs.add(name)
        return name

    # -- per-category commands -------------------------------------------

    def probe(self, used: set[str]) -> int:
        pool = [p for p in _PROBES if p[0] not in used]
        if pool:
            cmd, out = self.rng.choice(pool)
        else:
            self.counter += 1
            cmd, out = f"which tool{self.counter}", f"/usr/bin/tool{self.counter}"
        used.add(cmd)
        return self.add(cmd, out, 0, "Check what the environment provides.")

    def install(self, pkg: str | None = None, fail: bool = False, detail: str = "") -> int:
        pkg = pkg or self.fresh_package()
        version = f"{self.rng.randint(1, 4)}.{self.rng.randint(0, 12)}.{self.rng.randint(0, 9)}"
        if fail:
            out = f"ERROR: Could not find a version that satisfies the requirement {pkg}=={version}"
            if detail:
                out += f"\n{detail}"
            return self.add(f"pip install {pkg}=={version}", out, 1, f"Pin {pkg} to the version the task needs.")
        return self.add(f"pip install {pkg}=={version}", f"Successfully installed {pkg}-{version}", 0,
                        f"Install {pkg}.")

    def read(self, used: set[str]) -> int:
        for _ in range(8):
            mod, fn = self.rng.choice(_MODULES), self.rng.choice(_FUNCS)
            kind = self.rng.randrange(3)
            if kind == 0:
                cmd = f"cat src/pkg/{mod}.py"
                out = f"def {fn}(value):\n    return _{fn}_impl(value)\n"
            elif kind == 1:
                cmd = f"grep -rn \"def {fn}\" src/"
                out = f"src/pkg/{mod}.py:{self.rng.randint(3, 200)}:def {fn}(value):"
            else:
                start = self.rng.randint(1, 150)
                cmd = f"sed -n {start},{start + 30}p src/pkg/{mod}.py"
                out = f"    result = {fn}(value)\n    return result\n"
            if cmd not in used:
                used.add(cmd)
                return self.add(cmd, out, 0, f"Look at how {fn} is implemented.")
        self.counter += 1
        cmd = f"cat src/pkg/notes{self.counter}.txt"
        used.add(cmd)
        return self.add(cmd, "(notes)", 0, "Read the notes file.")

    def edit(self, mod: str | None = None, fail: bool = False, detail: str = "") -> int:
        mod = mod or self.fresh_module()
        fn = self.rng.choice(_FUNCS)
        lines = self.rng.randint(1, 12)
        path = f"src/pkg/{mod}.py"
        cmd = f"str_replace_editor str_replace {path} --old_str 'return {fn}(x)' --new_str 'return {fn}(x, strict=True)'"
        out = f"The file {path} has been edited ({lines} lines changed)."
        if fail:
            out += "\n" + (detail or "post-edit check failed").format(fn=fn, mod=mod)
        return self.add(cmd, out, 1 if fail else 0, f"Adjust {fn} in {path}.")

    def test(self, command: str = TEST_COMMAND, fail: bool = False) -> int:
        passed = self.rng.randint(20, 120)
        if fail:
            failed = self.rng.randint(1, 6)
            mod = self.rng.choice(_MODULES)
            out = f"FAILED tests/test_{mod}.py::test_{self.rng.choice(_FUNCS)} - AssertionError\n{failed} failed, {passed} passed in 1.{self.rng.randint(10, 99)}s"
            return self.add(command, out, 1, "Run the tests again.")
        return self.add(command, f"{passed} passed in 0.{self.rng.randint(10, 99)}s", 0, "Run the test suite.")


# ---------------------------------------------------------------------------
# plan checks


def _check_plan(plan: Sequence[StageLabel]) -> None:
    if not plan:
        raise InfeasibleConfig("stage plan is empty")
    for a, b in zip(plan, plan[1:]):
        if a is b:
            raise InfeasibleConfig(f"stage plan repeats {a.value} back to back")
    if V in plan and (P not in plan or plan.index(V) < plan.index(P)):
        raise InfeasibleConfig("verification cannot precede the first patching stage")


def baseline_block(plan: Sequence[StageLabel], onset_index: int) -> int:
    """0-based block that will hold the passing baseline check for an onset at ``onset_index``."""
    for i in range(onset_index - 1, -1, -1):
        stage = plan[i]
        if stage in (DI, P):
            break
        if stage is V or (stage is ID and P not in plan[:i]):
            return i
    raise InfeasibleConfig(
        "no inspection or verification stage sits between the onset and the previous state change"
    )


def _validate(cfg: SynthConfig) -> tuple[int, int]:
    """Returns the (min, max) feasible step counts."""
    lo, hi = cfg.steps
    if lo < 1 or lo > hi:
        raise InfeasibleConfig(f"bad step range {cfg.steps}")
    if not 0.0 <= cfg.noise <= 1.0:
        raise InfeasibleConfig(f"noise rate {cfg.noise} outside [0, 1]")
    plan = cfg.stage_plan
    _check_plan(plan)
    if cfg.archetype is Archetype.SHORT_CORRECT and cfg.plant is not None:
        raise InfeasibleConfig("a short correct run cannot carry a planted error")
    if cfg.archetype in (Archetype.SHORT_UNSOLVED,) and cfg.plant is None:
        raise InfeasibleConfig("a short unsolved run needs a planted error")
    if cfg.plant is None:
        needed = len(plan)
    else:
        k = cfg.plant.onset_stage
        if not 1 <= k <= len(plan):
            raise InfeasibleConfig(f"onset stage {k} outside the {len(plan)}-stage plan")
        if plan[k - 1] not in (DI, P):
            raise InfeasibleConfig(f"onset stage {k} is {plan[k - 1].value}; it must change state")
        if cfg.plant.cascade_length < 1:
            raise InfeasibleConfig("cascade length must be at least 1")
        baseline_block(plan, k - 1)
        needed = k + cfg.plant.cascade_length
    if needed > hi:
        raise InfeasibleConfig(f"plan needs at least {needed} steps, range allows {hi}")
    return max(lo, needed), hi


# ---------------------------------------------------------------------------
# generation


def _allocate(rng: random.Random, n_blocks: int, total: int) -> list[int]:
    sizes = [1] * n_blocks
    for _ in range(total - n_blocks):
        sizes[rng.randrange(n_blocks)] += 1
    return sizes


def _fill_block(b: _Builder, stage: StageLabel, size: int, baseline: bool) -> None:
    used: set[str] = set()
    if stage is EV:
        for _ in range(size):
            b.probe(used)
    elif stage is DI:
        for _ in range(size):
            b.install()
    elif stage is ID:
        for _ in range(size - 1 if baseline else size):
            b.read(used)
        if baseline:
            b.test()
    elif stage is P:
        for _ in range(size):
            b.edit()
    elif stage is V:
        b.test()
        for i in range(size - 1):
            b.test(f"python -m pytest tests/test_{_MODULES[i % len(_MODULES)]}.py -q")


def plant_noise(t: Trajectory, rate: float, seed: int | random.Random) -> tuple[Trajectory, frozenset[int]]:
    """Insert ``round(rate * N)`` duplicates of earlier explorations; return the new ids.

    A duplicate copies a read or probe issued from the same state (no state
    change in between) and is placed right after a step of the same
    category, so stage spans keep their shape.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate {rate} outside [0, 1]")
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    want = round(rate * len(t.steps))
    # (step, inserted?, category, is_change)
    items = [(s, False, commands.categorize(s.command), commands.kind_of(s.command) is StepKind.CHANGE) for s in t.steps]
    for _ in range(want):
        options = []
        for pos in range(1, len(items) + 1):
            cat = items[pos - 1][2]
            if cat not in (Category.READ, Category.PROBE):
                continue
            for j in range(pos - 1, -1, -1):
                if items[j][3]:
                    break
                if items[j][2] is cat:
                    options.append((pos, j))
        if not options:
            break
        pos, j = rng.choice(options)
        src, _, cat, _ = items[j]
        items.insert(pos, (replace(src, thought="Look at this again."), True, cat, False))
    steps, added = [], set()
    for i, (s, is_new, _, _) in enumerate(items, 1):
        steps.append(replace(s, step_id=i))
        if is_new:
            added.add(i)
    return replace(t, steps=tuple(steps)), frozenset(added)


def build(cfg: SynthConfig) -> SynthRun:
    """Construct the run in memory (deterministic in ``cfg``)."""
    lo, hi = _validate(cfg)
    rng = random.Random(cfg.seed)
    b = _Builder(rng)
    if cfg.archetype in (Archetype.SHORT_CORRECT, Archetype.SHORT_UNSOLVED):
        needed = cfg.plant.onset_stage + cfg.plant.cascade_length if cfg.plant else len(cfg.stage_plan)
        if needed > SHORT_RUN_STEPS:
            raise InfeasibleConfig(f"plan does not fit in {SHORT_RUN_STEPS} steps")
        lo = hi = SHORT_RUN_STEPS
    total = rng.randint(lo, hi)
    plan = cfg.stage_plan
    plant = cfg.plant
    incorrect: set[int] = set()
    critical = None
    if plant is None:
        sizes = _allocate(rng, len(plan), total)
        for stage, size in zip(plan, sizes):
            _fill_block(b, stage, size, baseline=False)
    else:
        k = plant.onset_stage - 1
        base = baseline_block(plan, k)
        blocks = plan[: k + 1]
        sizes = _allocate(rng, len(blocks), total - plant.cascade_length)
        for i, (stage, size) in enumerate(zip(blocks, sizes)):
            if i == k:
                break
            _fill_block(b, stage, size, baseline=i == base)
        detail = _ONSET_TEXT[plant.error_type]
        onset_stage = plan[k]
        if onset_stage is P:
            for _ in range(sizes[k] - 1):
                b.edit()
            target = b.fresh_module()
            critical = b.edit(target, fail=True, detail=detail)

            def retry() -> int:
                return b.edit(target, fail=True, detail=detail)
        else:
            for _ in range(sizes[k] - 1):
                b.install()
            target = b.fresh_package()
            critical = b.install(target, fail=True, detail=detail.format(fn="", mod=""))

            def retry() -> int:
                return b.install(target, fail=True)
        incorrect.add(critical)
        test_next = plant.cascade_length % 2 == 1
        for _ in range(plant.cascade_length):
            if test_next:
                b.test(fail=True)
            else:
                incorrect.add(retry())
            test_next = not test_next

    task_id = cfg.task_id or f"synth-{cfg.seed}"
    outcome = Outcome.UNSOLVED if plant is not None else Outcome.SOLVED
    t = Trajectory(tuple(b.steps), task_id, "synth-agent", "synth-model", outcome)
    unuseful: frozenset[int] = frozenset()
    if cfg.noise > 0:
        t, unuseful = plant_noise(t, cfg.noise, rng)
        originals = [sid for sid in range(1, len(t.steps) + 1) if sid not in unuseful]
        remap = {old: new for old, new in zip(range(1, len(originals) + 1), originals)}
        incorrect = {remap[s] for s in incorrect}
        critical = remap[critical] if critical is not None else None
    seg = segment_stages(t, classify_steps(t))
    gold = GoldAnnotation(
        stage_spans=seg.spans,
        incorrect_step_ids=frozenset(incorrect),
        unuseful_step_ids=unuseful,
        error_critical_step=critical,
        error_type=plant.error_type if plant else None,
        outcome=outcome,
        category=cfg.category,
        reasons=tuple(_reason(span, critical, incorrect, unuseful) for span in seg.spans),
    )
    task = (
        f"# Task {task_id}\n\nThe function `pkg.core.load` rejects valid inputs. "
        "Make the test suite under tests/ pass without changing the tests.\n"
    )
    return SynthRun(cfg, t, gold, task)


def _reason(span: Any, critical: int | None, incorrect: set[int], unuseful: frozenset[int]) -> str:
    notes = []
    if critical is not None and critical in span:
        notes.append(f"step {critical} is the first failing state change")
    bad = sorted(s for s in incorrect if s in span and s != critical)
    if bad:
        notes.append(f"steps {bad} retry the failing change")
    dup = sorted(s for s in unuseful if s in span)
    if dup:
        notes.append(f"steps {dup} repeat earlier explorations")
    return "; ".join(notes)


# ---------------------------------------------------------------------------
# writing


def _transcript_lines(run: SynthRun) -> list[str]:
    rows: list[dict[str, Any]] = [
        {"role": "system", "content": "You are an autonomous software engineering agent working in a shell."},
        {"role": "user", "content": run.task_text},
    ]
    for s in run.trajectory.steps:
        rows.append(
            {
                "role": "assistant",
                "content": f"{s.thought}\n\n```bash\n{s.command}\n```",
                "usage": {"total_tokens": s.token_usage},
            }
        )
        rows.append({"role": "user", "content": f"<returncode>{s.returncode}</returncode>\n<output>\n{s.output}\n</output>"})
    return [json.dumps(r, ensure_ascii=False) for r in rows]


def write_run(run: SynthRun, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg, t = run.config, run.trajectory
    (out_dir / TASK_FILE).write_text(run.task_text, encoding="utf-8")
    meta = {"task_id": t.task_id, "framework_id": t.framework_id, "backbone_id": t.backbone_id,
            "outcome": t.outcome.value}
    (out_dir / META_FILE).write_text(dump_json(meta), encoding="utf-8")
    (out_dir / GOLD_FILE).write_text(dump_json(run.gold.to_dict()), encoding="utf-8")
    dialect = cfg.dialect
    if cfg.archetype in (Archetype.TIMEOUT, Archetype.TRUNCATED):
        dialect = Dialect.TRANSCRIPT
    if dialect is Dialect.STEPS:
        (out_dir / STEPS_FILE).write_text(dump_json(t.steps_to_list()), encoding="utf-8")
    else:
        lines = _transcript_lines(run)
        text = "\n".join(lines) + "\n"
        if cfg.archetype is Archetype.TIMEOUT:
            stop = {"role": "system", "content": "Run stopped by the harness.", "exit_status": "TimeLimitExceeded"}
            text += json.dumps(stop) + "\n"
        elif cfg.archetype is Archetype.TRUNCATED:
            partial = json.dumps({"role": "assistant", "content": "Try once more.\n\n```bash\npython -m pytest"})
            text += partial[: len(partial) // 2]
        (out_dir / TRANSCRIPT_FILE).write_text(text, encoding="utf-8")
    if cfg.archetype is Archetype.ENV_CORRUPT:
        (out_dir / RUN_FLAGS_FILE).write_text(dump_json({"env_corrupt": True}), encoding="utf-8")
    return out_dir


def generate(cfg: SynthConfig, out_dir: Path) -> tuple[Path, GoldAnnotation]:
    run = build(cfg)
    return write_run(run, out_dir), run.gold


# ---------------------------------------------------------------------------
# corpora

DI_PLANS = ((EV, ID, DI), (ID, DI), (EV, DI, ID, DI), (ID, EV, DI))
P_PLANS = ((EV, DI, ID, P), (ID, P), (EV, DI, ID, P, V, P), (DI, ID, P, V, ID, P), (EV, ID, P, V, P))


def quota(n: int, rates: dict[Any, float]) -> dict[Any, int]:
    """Integer counts summing to ``n`` that follow ``rates`` (largest remainder)."""
    total = sum(rates.values())
    raw = {k: n * v / total for k, v in rates.items()}
    counts = {k: int(v) for k, v in raw.items()}
    order = sorted(rates, key=lambda k: (-(raw[k] - counts[k]), list(rates).index(k)))
    for k in order[: n - sum(counts.values())]:
        counts[k] += 1
    return counts


def planted_configs(
    n: int,
    seed: int,
    stage_rates: dict[StageLabel, float] | None = None,
    cascade: tuple[int, int] = (1, 4),
    noise: float = 0.0,
    steps: tuple[int, int] = (12, 40),
) -> list[SynthConfig]:
    """``n`` planted configs whose onset stages follow ``stage_rates`` exactly (up to rounding)."""
    rates = stage_rates or {DI: 0.3, P: 0.7}
    rng = random.Random(seed)
    onsets: list[StageLabel] = []
    for stage, count in quota(n, rates).items():
        onsets.extend([StageLabel(stage)] * count)
    rng.shuffle(onsets)
    errors = {DI: [ErrorType.DEPENDENCY_RESOLUTION, ErrorType.ENV_SETUP],
              P: [ErrorType.MISLOCALIZED_EDIT, ErrorType.INCORRECT_HYPOTHESIS, ErrorType.UNPRODUCTIVE_LOOPING]}
    out = []
    for i, stage in enumerate(onsets):
        if stage not in (DI, P):
            raise InfeasibleConfig(f"onset stage must be a state-changing stage, not {stage.value}")
        plan = rng.choice(DI_PLANS if stage is DI else P_PLANS)
        length = rng.randint(*cascade)
        out.append(
            SynthConfig(
                seed=seed * 100_003 + i,
                steps=steps,
                stage_plan=plan,
                plant=PlantSpec(rng.choice(errors[stage]), len(plan), length),
                noise=noise,
                dialect=rng.choice(list(Dialect)),
                category=rng.choice(["parsing", "cli", "io", "config"]),
                task_id=f"synth-{seed}-{i:04d}",
            )
        )
    return out


def clean_config(seed: int, steps: tuple[int, int] = (12, 40), noise: float = 0.0) -> SynthConfig:
    rng = random.Random(seed)
    plan = rng.choice([CANONICAL_PLAN, (EV, ID, P, V), (DI, ID, P, V, ID, P, V), (ID, P, V)])
    return SynthConfig(seed=seed, steps=steps, stage_plan=plan, noise=noise, task_id=f"clean-{seed}")


def filter_corpus_configs(seed: int = 0) -> list[SynthConfig]:
    """Forty runs mixing every filter archetype with retained runs."""
    rng = random.Random(seed)
    mix = [
        (Archetype.NORMAL, True, 8),
        (Archetype.NORMAL, False, 4),
        (Archetype.SHORT_CORRECT, False, 6),
        (Archetype.SHORT_UNSOLVED, True, 6),
        (Archetype.TIMEOUT, True, 6),
        (Archetype.TRUNCATED, True, 5),
        (Archetype.ENV_CORRUPT, True, 5),
    ]
    out = []
    for archetype, planted, count in mix:
        for _ in range(count):
            i = len(out)
            plan = (EV, DI, ID, P) if planted else (EV, ID, P, V)
            plant = PlantSpec(ErrorType.MISLOCALIZED_EDIT, len(plan), rng.randint(1, 3)) if planted else None
            steps = (SHORT_RUN_STEPS, SHORT_RUN_STEPS) if archetype in (Archetype.SHORT_CORRECT, Archetype.SHORT_UNSOLVED) else (12, 30)
            out.append(
                SynthConfig(
                    seed=seed * 1000 + i,
                    steps=steps,
                    stage_plan=plan,
                    plant=plant,
                    dialect=rng.choice(list(Dialect)),
                    archetype=archetype,
                    task_id=f"filter-{seed}-{i:02d}",
                )
            )
    rng.shuffle(out)
    return out


def generate_corpus(configs: Iterable[SynthConfig], out_root: Path) -> list[tuple[Path, GoldAnnotation]]:
    out_root = Path(out_root)
    return [generate(cfg, out_root / (cfg.task_id or f"run-{cfg.seed}")) for cfg in configs]
