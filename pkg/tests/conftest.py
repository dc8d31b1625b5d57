from __future__ import annotations

import pytest

# criterion number -> (passed, label, seconds); filled by test_acceptance.py
CRITERIA: dict[int, tuple[bool, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    num = getattr(item.function, "criterion", None)
    if num is None or rep.when != "call":
        return
    label, budget = item.function.criterion_label, item.function.criterion_budget
    CRITERIA[num] = (rep.passed, f"{label} (budget {budget:g} s)", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        ok, label, secs = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {label}  [{secs:.1f} s]")
