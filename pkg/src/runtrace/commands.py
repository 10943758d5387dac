"""Decision tables over the shell commands an agent issued.

A command is split into pipeline/sequence segments; each segment is put in
one category by its head token and flags, and the strongest category wins:

    INSTALL > EDIT > CHECK > PROBE > READ

INSTALL and EDIT mutate the workspace or environment (state-changing steps);
the rest only observe. Test runs, linters and builds are CHECK: they observe
whether the current state works. Unknown heads fall back to READ.
"""

from __future__ import annotations

import os
import re
import shlex
from enum import Enum
from functools import lru_cache

from runtrace.model import Observation, StepKind


class Category(str, Enum):
    PROBE = "probe"
    INSTALL = "install"
    CHECK = "check"
    EDIT = "edit"
    READ = "read"


_RANK = {Category.READ: 0, Category.PROBE: 1, Category.CHECK: 2, Category.EDIT: 3, Category.INSTALL: 4}

SEQUENCE_OPS = {"&&", "||", ";", "&", "(", ")", "\n"}
PIPE_OPS = {"|", "|&"}
WRITE_REDIRECTS = {">", ">>", ">|", "&>", "&>>"}
SAFE_SINKS = {"/dev/null", "/dev/stdout", "/dev/stderr"}

WRAPPERS = {"sudo", "time", "env", "nohup", "nice", "command", "exec", "stdbuf"}
NEUTRAL_HEADS = {"cd", "pushd", "popd", "export", "source", ".", "set", "unset", "true", "alias", "clear"}
# filters that only reshape another command's output when piped
FILTERS = {"grep", "egrep", "fgrep", "head", "tail", "sort", "uniq", "wc", "cut", "tr", "less",
           "more", "awk", "sed", "column", "xargs", "cat", "nl", "fold", "jq", "tee"}

PYTHONS = {"python", "python3", "python2", "py", "pypy", "pypy3"}

PROBE_HEADS = {"which", "whereis", "type", "uname", "printenv", "whoami", "hostname", "nproc",
               "df", "free", "lscpu", "lsb_release", "id", "locale", "ulimit", "arch"}
VERSION_FLAGS = {"--version", "-V", "-version", "version", "--help", "-v"}

TEST_HEADS = {"pytest", "py.test", "nosetests", "tox", "nox", "jest", "mocha", "vitest", "rspec",
              "phpunit", "ctest", "busted", "prove", "trial"}
LINT_HEADS = {"flake8", "pylint", "mypy", "ruff", "black", "isort", "eslint", "tsc", "shellcheck",
              "pyright", "clippy", "golangci-lint", "rubocop"}
BUILD_HEADS = {"make", "cmake", "ninja", "gcc", "g++", "clang", "clang++", "javac", "mvn", "gradle",
               "gradlew", "bazel", "msbuild", "dotnet", "rustc"}

EDIT_HEADS = {"rm", "rmdir", "mv", "cp", "mkdir", "touch", "chmod", "chown", "ln", "patch",
              "truncate", "dd", "unzip", "install", "rsync", "ed", "applypatch", "apply_patch",
              "create", "edit", "insert", "append"}
EDITOR_TOOLS = {"str_replace_editor", "str_replace_based_edit_tool", "file_editor", "edit_file"}
EDITOR_READ_SUBCOMMANDS = {"view", "show", "read"}

GIT_READ = {"status", "diff", "log", "show", "blame", "grep", "ls-files", "rev-parse", "branch",
            "remote", "describe", "shortlog", "reflog", "cat-file", "ls-tree", "config"}
SERVICE_VERBS = {"start", "stop", "restart", "reload", "enable", "disable"}

_PKG_MANAGERS: dict[str, set[str]] = {
    "pip": {"install", "uninstall"},
    "pip3": {"install", "uninstall"},
    "pipx": {"install", "uninstall"},
    "conda": {"install", "create", "update", "remove", "uninstall"},
    "mamba": {"install", "create", "update", "remove"},
    "micromamba": {"install", "create", "update", "remove"},
    "apt": {"install", "remove", "update", "upgrade", "purge"},
    "apt-get": {"install", "remove", "update", "upgrade", "purge"},
    "yum": {"install", "remove", "update"},
    "dnf": {"install", "remove", "update"},
    "apk": {"add", "del", "update"},
    "brew": {"install", "uninstall", "upgrade"},
    "npm": {"install", "i", "ci", "add", "uninstall", "update"},
    "yarn": {"add", "install", "remove", "upgrade"},
    "pnpm": {"add", "install", "i", "remove", "update"},
    "poetry": {"add", "install", "update", "remove", "lock"},
    "cargo": {"add", "install", "update", "remove"},
    "go": {"get", "install"},
    "gem": {"install", "uninstall"},
    "bundle": {"install", "update"},
    "composer": {"install", "require", "update"},
    "uv": {"add", "sync", "remove"},
    "pdm": {"add", "install", "sync"},
}
_PKG_PROBE_SUBCOMMANDS = {"list", "freeze", "show", "info", "env", "ls", "outdated", "check", "config"}

_TEST_SUBCOMMANDS = {
    "npm": {"test", "t"},
    "yarn": {"test"},
    "pnpm": {"test"},
    "go": {"test", "vet", "build"},
    "cargo": {"test", "check", "build", "clippy"},
    "make": {"test", "check"},
    "mvn": {"test", "verify"},
    "gradle": {"test", "check"},
    "dotnet": {"test", "build"},
}
_PY_TEST_MODULES = {"pytest", "unittest", "nose", "tox", "mypy", "flake8", "pylint", "ruff",
                    "py_compile", "compileall", "doctest"}

_SCRIPT_TEST_RE = re.compile(r"(^|/)(tests?/|test_[\w.-]*\.\w+$|[\w.-]*_test\.\w+$|run_?tests?[\w.-]*$|runtests[\w.-]*$)")
_PY_WRITE_RE = re.compile(r"""open\([^)]*,\s*(mode\s*=\s*)?['"][wax]\+?b?['"]|\.write_text\(|\.write_bytes\(|shutil\.(copy|move|rmtree)|os\.(remove|unlink|rename|makedirs|mkdir)""")
_PATH_RE = re.compile(r"^(\.{0,2}/)?[\w@+~-]+(/[\w@.+~-]+)*\.\w{1,8}$|^(\.{0,2}/)?[\w@.+~-]+(/[\w@.+~-]*)+$")
_ENV_ASSIGN_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*=")


def tokenize(command: str) -> list[str]:
    """Shell-ish tokens with operators split out; falls back to whitespace on bad quoting."""
    return list(_tokenize(command))


@lru_cache(maxsize=4096)
def _tokenize(command: str) -> tuple[str, ...]:
    lex = shlex.shlex(command.replace("\n", " ; "), posix=True, punctuation_chars=True)
    lex.whitespace_split = True
    lex.commenters = ""
    try:
        return tuple(lex)
    except ValueError:
        return tuple(command.split())


def segments(command: str) -> list[tuple[list[str], bool, list[str]]]:
    """Split into ``(tokens, piped, write_targets)`` segments.

    ``piped`` is true when the segment reads another segment's output.
    ``write_targets`` collects files the segment redirects output into.
    """
    out: list[tuple[list[str], bool, list[str]]] = []
    current: list[str] = []
    targets: list[str] = []
    piped = False
    tokens = tokenize(command)
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in SEQUENCE_OPS or tok in PIPE_OPS:
            if current:
                out.append((current, piped, targets))
            current, targets = [], []
            piped = tok in PIPE_OPS
        elif tok in WRITE_REDIRECTS or (tok.endswith(">") and set(tok) <= set("0123456789>&|")):
            nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
            if nxt and not nxt.startswith("&") and nxt not in SAFE_SINKS:
                targets.append(nxt)
            i += 1
        elif tok in {"<", "<<", "<<<", "<<-"}:
            i += 1
        elif tok.isdigit() and i + 1 < len(tokens) and tokens[i + 1] in WRITE_REDIRECTS | {"<", ">&"}:
            pass  # file-descriptor prefix such as the 2 in 2>/dev/null
        elif set(tok) <= set("<>&|;()0123456789") and any(c in tok for c in "<>&|;()"):
            pass  # stray operator
        else:
            current.append(tok)
        i += 1
    if current or targets:
        out.append((current, piped, targets))
    return out


def _strip_wrappers(tokens: list[str]) -> list[str]:
    toks = list(tokens)
    while toks:
        head = toks[0]
        if _ENV_ASSIGN_RE.match(head):
            toks.pop(0)
        elif os.path.basename(head) in WRAPPERS:
            toks.pop(0)
            while toks and toks[0].startswith("-"):
                toks.pop(0)
        elif head == "timeout":
            toks.pop(0)
            while toks and (toks[0].startswith("-") or toks[0][:1].isdigit()):
                toks.pop(0)
        else:
            break
    return toks


def _args(tokens: list[str]) -> list[str]:
    return [t for t in tokens[1:] if not t.startswith("-")]


def _is_test_script(path: str) -> bool:
    return bool(_SCRIPT_TEST_RE.search(path))


def _python_category(toks: list[str]) -> Category | None:
    rest = toks[1:]
    if not rest:
        return Category.READ
    if rest[0] in VERSION_FLAGS:
        return Category.PROBE
    if rest[0] == "-m" and len(rest) > 1:
        mod = rest[1]
        if mod in ("pip", "pip3"):
            return _pkg_category("pip", rest[2:])
        if mod in _PY_TEST_MODULES:
            if "--version" in rest or "--collect-only" in rest:
                return Category.PROBE
            return Category.CHECK
        if mod in ("venv", "virtualenv", "ensurepip"):
            return Category.INSTALL
        return Category.READ
    if rest[0] == "-c" and len(rest) > 1:
        code = rest[1]
        return Category.EDIT if _PY_WRITE_RE.search(code) else Category.READ
    script = next((t for t in rest if not t.startswith("-")), "")
    if script in ("setup.py",) or script.endswith("/setup.py"):
        return Category.INSTALL if any(a in rest for a in ("install", "develop")) else Category.CHECK
    if script.endswith("manage.py") and "test" in rest:
        return Category.CHECK
    if script and _is_test_script(script):
        return Category.CHECK
    return Category.READ


def _pkg_category(head: str, rest: list[str]) -> Category | None:
    args = [a for a in rest if not a.startswith("-")]
    sub = args[0] if args else ""
    if head == "uv" and sub == "pip":
        sub = args[1] if len(args) > 1 else ""
        return Category.INSTALL if sub in ("install", "uninstall", "sync") else Category.PROBE
    if sub in _PKG_MANAGERS.get(head, ()):
        return Category.INSTALL
    if head in _TEST_SUBCOMMANDS and sub in _TEST_SUBCOMMANDS[head]:
        return Category.CHECK
    if head == "npm" and sub == "run" and len(args) > 1:
        script = args[1]
        return Category.CHECK if script.split(":")[0] in ("test", "lint", "build", "check", "typecheck") else Category.READ
    if sub in _PKG_PROBE_SUBCOMMANDS or any(a in VERSION_FLAGS for a in rest[:1]):
        return Category.PROBE
    return None


def segment_category(tokens: list[str], piped: bool = False, write_targets: list[str] | None = None) -> Category | None:
    """Category of a single segment; ``None`` for neutral segments (``cd``, piped filters)."""
    toks = _strip_wrappers(tokens)
    if write_targets:
        return Category.EDIT
    if not toks:
        return None
    head = os.path.basename(toks[0])
    rest = toks[1:]
    if head in NEUTRAL_HEADS:
        return None
    if piped and head in FILTERS and not (head == "sed" and _sed_in_place(rest)):
        return None
    if head in PYTHONS or re.fullmatch(r"python\d(\.\d+)?", head):
        return _python_category(toks)
    if head in _PKG_MANAGERS or head in _TEST_SUBCOMMANDS or head == "uv":
        cat = _pkg_category(head, rest)
        if cat is not None:
            return cat
        if head in BUILD_HEADS:
            return Category.CHECK
        return Category.PROBE if rest[:1] and rest[0] in VERSION_FLAGS else Category.READ
    if rest[:1] and rest[0] in VERSION_FLAGS and head not in EDIT_HEADS:
        return Category.PROBE
    if head in PROBE_HEADS or (head == "env" and not rest):
        return Category.PROBE
    if head in TEST_HEADS:
        return Category.PROBE if ("--collect-only" in rest or "--co" in rest) else Category.CHECK
    if head in LINT_HEADS:
        if head in ("black", "isort", "ruff") and not any(a in rest for a in ("--check", "check", "--diff")):
            if head == "ruff" and "format" not in rest and "--fix" not in rest:
                return Category.CHECK
            return Category.EDIT
        return Category.CHECK
    if head in BUILD_HEADS:
        if "install" in rest:
            return Category.INSTALL
        return Category.CHECK
    if head.startswith("./") or "/" in toks[0] or head.endswith(".sh"):
        script = toks[0] if not head.endswith(".sh") or "/" in toks[0] else head
        if _is_test_script(script) or _is_test_script(head):
            return Category.CHECK
    if head in ("bash", "sh", "zsh") and rest:
        script = next((t for t in rest if not t.startswith("-")), "")
        if script and _is_test_script(script):
            return Category.CHECK
        return Category.READ
    if head == "git":
        sub = next((t for t in rest if not t.startswith("-")), "")
        if not sub or sub in GIT_READ:
            if sub == "branch" and any(a in rest for a in ("-d", "-D", "-m", "-M")):
                return Category.EDIT
            return Category.READ
        if sub == "stash" and any(a in rest for a in ("list", "show")):
            return Category.READ
        return Category.EDIT
    if head == "sed":
        return Category.EDIT if _sed_in_place(rest) else Category.READ
    if head in ("perl", "ruby"):
        in_place = any(a.startswith("-") and not a.startswith("--") and "i" in a[1:] for a in rest)
        return Category.EDIT if in_place else Category.READ
    if head == "awk" and "-i" in rest and "inplace" in rest:
        return Category.EDIT
    if head == "tar":
        flags = "".join(a for a in rest[:1])
        return Category.EDIT if ("x" in flags or "c" in flags) and "t" not in flags else Category.READ
    if head == "tee":
        return Category.EDIT if _args(toks) else None
    if head in EDITOR_TOOLS:
        sub = rest[0] if rest else ""
        return Category.READ if sub in EDITOR_READ_SUBCOMMANDS else Category.EDIT
    if head in EDIT_HEADS:
        return Category.EDIT
    if head in ("systemctl", "service", "supervisorctl", "docker", "docker-compose", "nginx", "pg_ctl", "redis-cli"):
        if any(a in SERVICE_VERBS or a in ("up", "run", "-s") for a in rest):
            return Category.EDIT
        return Category.PROBE
    return Category.READ


def _sed_in_place(rest: list[str]) -> bool:
    return any(a == "-i" or a.startswith("-i") or a == "--in-place" or a.startswith("--in-place=")
               or (a.startswith("-") and not a.startswith("--") and "i" in a[1:]) for a in rest)


def categorize(command: str) -> Category:
    """Category of a whole command line (strongest segment wins)."""
    best: Category | None = None
    for toks, piped, targets in segments(command):
        cat = segment_category(toks, piped, targets)
        if cat is None:
            continue
        if best is None or _RANK[cat] > _RANK[best]:
            best = cat
    return best if best is not None else Category.READ


def kind_of(command: str) -> StepKind:
    return StepKind.CHANGE if categorize(command) in (Category.INSTALL, Category.EDIT) else StepKind.EXPLORE


def is_check(command: str) -> bool:
    return categorize(command) is Category.CHECK


# ---------------------------------------------------------------------------
# observations

_FAIL_MARKERS = re.compile(
    r"Traceback \(most recent call last\)|^E\s{2,}|\b\d+ (failed|errors?)\b|\bFAILED\b|^error:|^ERROR:|command not found|No such file or directory",
    re.MULTILINE,
)
_PASS_SUMMARY = re.compile(r"\b\d+ passed\b|^OK\b|\ball tests passed\b", re.MULTILINE | re.IGNORECASE)


def observation_failed(obs: Observation | None) -> bool:
    """True when the observation signals failure (return code first, text markers as fallback)."""
    if obs is None:
        return False
    if obs.returncode is not None:
        return obs.returncode != 0
    return bool(_FAIL_MARKERS.search(obs.content))


def check_passed(obs: Observation | None) -> bool | None:
    """Outcome of a test/check run: True, False, or None when undecidable."""
    if obs is None:
        return None
    if obs.returncode is not None:
        return obs.returncode == 0
    if _FAIL_MARKERS.search(obs.content):
        return False
    if _PASS_SUMMARY.search(obs.content):
        return True
    return None


_GIT_STAT = re.compile(r"(\d+) insertions?\(\+\)|(\d+) deletions?\(-\)")
_LINES_CHANGED = re.compile(r"(\d+) lines? (?:changed|modified|added|removed|edited)", re.IGNORECASE)


def lines_changed(text: str) -> int:
    """Line-change count reported in an observation; 0 when none is reported."""
    total = 0
    stat = _GIT_STAT.findall(text)
    if stat:
        return sum(int(a or 0) + int(b or 0) for a, b in stat)
    for m in _LINES_CHANGED.finditer(text):
        total += int(m.group(1))
    if total:
        return total
    diff_lines = [ln for ln in text.splitlines() if ln[:1] in "+-" and not ln.startswith(("+++", "---"))]
    if any(ln.startswith("@@") for ln in text.splitlines()):
        return len(diff_lines)
    return 0


def targets(command: str) -> frozenset[str]:
    """Files (or, for installs, package names) a command acts on."""
    found: set[str] = set()
    for toks, _piped, redirects in segments(command):
        toks = _strip_wrappers(toks)
        found.update(redirects)
        if not toks:
            continue
        head = os.path.basename(toks[0])
        cat = segment_category(toks)
        if cat is Category.INSTALL:
            for arg in _args(toks)[1:]:
                if arg in _PKG_MANAGERS.get(head, ()) or arg in ("pip", "install"):
                    continue
                name = re.split(r"[=<>!~\[;@ ]", arg, maxsplit=1)[0].lower()
                if name and name != ".":
                    found.add(f"pkg:{name}")
            continue
        args = toks[1:]
        if head in ("sed", "perl", "awk") and not any(a in ("-e", "--expression", "-f") for a in args):
            # first positional is the script, not a file
            positional = [a for a in args if not a.startswith("-")]
            if positional:
                args = [a for a in args if a is not positional[0]]
        for tok in args:
            if tok.startswith("-") or "://" in tok or "=" in tok:
                continue
            if tok in SAFE_SINKS:
                continue
            if _PATH_RE.match(tok):
                found.add(os.path.normpath(tok))
    return frozenset(found)
