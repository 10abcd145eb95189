import time

import pytest

SUITE_BUDGET_S = 15 * 60


class Clauses:
    """Records every clause of an acceptance criterion, then asserts them together."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.items: list[tuple[str, bool, str]] = []
        self.finished = False

    def check(self, name: str, ok, detail: str = "") -> bool:
        ok = bool(ok)
        self.items.append((name, ok, detail))
        print(f"  [{'ok' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    @property
    def passed(self) -> bool:
        return self.finished and all(ok for _, ok, _ in self.items)

    def finish(self):
        self.finished = True
        bad = [f"{name} ({detail})" for name, ok, detail in self.items if not ok]
        assert not bad, f"criterion {self.number} failed: " + "; ".join(bad)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._suite_start = time.perf_counter()
    config._criteria = {}


@pytest.fixture
def clauses(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    rec = Clauses(number, title)
    request.config._criteria[number] = rec
    return rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = config._criteria
    if not criteria:
        return
    elapsed = time.perf_counter() - config._suite_start
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(criteria):
        rec = criteria[number]
        ok = rec.passed
        extra = ""
        if number == 10:
            within = elapsed < SUITE_BUDGET_S
            ok = ok and within
            extra = f" [suite wall time {elapsed:.1f} s, budget {SUITE_BUDGET_S} s]"
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {rec.title}{extra}")
        for name, good, detail in rec.items:
            if not good:
                tr.write_line(f"    failing clause: {name}: {detail}")
