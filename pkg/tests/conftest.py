import contextlib
import sys

import pytest

from conesem.pcf.evaluator import RECURSION_LIMIT

# raised once up front so evaluate() never changes it inside a hypothesis run
sys.setrecursionlimit(max(sys.getrecursionlimit(), RECURSION_LIMIT))

_CRITERIA = pytest.StashKey[dict]()


class CriterionLog:
    def __init__(self, store: dict):
        self.store = store

    @contextlib.contextmanager
    def __call__(self, number: int, title: str):
        notes: list[str] = []
        try:
            yield notes.append
        except BaseException:
            self._record(number, title, False, notes)
            raise
        self._record(number, title, True, notes)

    def _record(self, number, title, ok, notes):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
        if notes:
            line += "  (" + "; ".join(notes) + ")"
        self.store[number] = line
        # bypasses capsys so the line shows under -s even inside capturing tests
        print(line, file=sys.__stdout__, flush=True)


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    return CriterionLog(request.config.stash[_CRITERIA])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
