"""Shared test configuration.

The acceptance tests register one human-readable PASS/FAIL line per
criterion; the hook below prints them at the end of the run so the
acceptance verdict is visible regardless of capture settings.
"""

import numpy as np
import pytest

# criterion label -> (passed, detail); filled in by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def record_criterion(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[label] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[label]
        verdict = "PASS" if passed else "FAIL"
        tw.write_line(f"{label} {verdict}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
