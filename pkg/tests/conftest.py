"""Collects acceptance verdicts and prints one PASS/FAIL line per criterion."""

import pytest

ACCEPTANCE: dict[int, tuple[str, bool, list[str]]] = {}


class Verdict:
    """Named checks for one acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.checks: list[tuple[str, bool]] = []

    def check(self, label: str, ok) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    def finish(self):
        ok = all(c[1] for c in self.checks)
        ACCEPTANCE[self.number] = (self.title, ok,
                                   [f"{'ok ' if c[1] else 'BAD'} {c[0]}" for c in self.checks])
        failed = [c[0] for c in self.checks if not c[1]]
        assert not failed, "failed: " + "; ".join(failed)


@pytest.fixture
def verdict():
    made = []

    def make(number, title):
        v = Verdict(number, title)
        made.append(v)
        return v

    return make


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, lines = ACCEPTANCE[n]
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
        for line in lines:
            tr.write_line(f"      {line}")
