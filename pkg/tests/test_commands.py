from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from runtrace.commands import Category, categorize, check_passed, kind_of, lines_changed, observation_failed, targets
from runtrace.model import Observation, StepKind


@pytest.mark.parametrize(
    "command, category",
    [
        ("ls -la", Category.READ),
        ("cat src/a.py", Category.READ),
        ("sed -n 1,20p a.py", Category.READ),
        ("cat a | grep b", Category.READ),
        ("str_replace_editor view src/a.py", Category.READ),
        ("git diff", Category.READ),
        ("echo hi > /dev/null", Category.READ),
        ("mystery_tool --flag", Category.READ),
        ("which python", Category.PROBE),
        ("uname -a", Category.PROBE),
        ("pip --version", Category.PROBE),
        ("pip list", Category.PROBE),
        ("python -m pytest tests/ -q", Category.CHECK),
        ("cd src && pytest", Category.CHECK),
        ("tox -e py310", Category.CHECK),
        ("sed -i s/a/b/ a.py", Category.EDIT),
        ("echo hi > out.txt", Category.EDIT),
        ("git commit -am x", Category.EDIT),
        ("rm -rf build", Category.EDIT),
        ("str_replace_editor create src/b.py --file_text x", Category.EDIT),
        ("pip install requests", Category.INSTALL),
        ("npm install", Category.INSTALL),
        ("apt-get install -y curl", Category.INSTALL),
        ("python setup.py develop", Category.INSTALL),
    ],
)
def test_categorize(command, category):
    assert categorize(command) is category


def test_highest_category_wins_in_compound_commands():
    assert categorize("cat setup.py && pip install -e .") is Category.INSTALL
    assert categorize("pytest -x; sed -i s/a/b/ x.py") is Category.EDIT


@given(st.text(max_size=60))
def test_kind_is_total_and_consistent(command):
    cat = categorize(command)
    expected = StepKind.CHANGE if cat in (Category.EDIT, Category.INSTALL) else StepKind.EXPLORE
    assert kind_of(command) is expected


def test_observation_status():
    assert observation_failed(Observation("x", 1))
    assert not observation_failed(Observation("ok", 0))
    assert not observation_failed(None)
    assert check_passed(Observation("3 passed", 0)) is True
    assert check_passed(Observation("1 failed", 1)) is False


def test_lines_changed_and_targets():
    assert lines_changed("(3 lines changed)") == 3
    assert lines_changed(" 2 files changed, 5 insertions(+), 2 deletions(-)") == 7
    assert lines_changed("nothing here") == 0
    assert targets("str_replace_editor str_replace src/a.py --old_str 'x' --new_str 'y'") == {"src/a.py"}
    assert targets("pip install requests") == {"pkg:requests"}
