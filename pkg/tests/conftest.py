import time

import pytest

from osplit.lab import run_convergence_study, run_smoothness_study

_CACHE = {}


def _timed(key, func):
    if key not in _CACHE:
        start = time.perf_counter()
        value = func()
        _CACHE[key] = (value, time.perf_counter() - start)
    return _CACHE[key]


@pytest.fixture(scope="session")
def study():
    """Run (once per session) the full convergence study of a preset.

    Returns ``(report, seconds)``.
    """

    def get(name):
        return _timed(("study", name), lambda: run_convergence_study(name, keep_solutions=True))

    return get


@pytest.fixture(scope="session")
def smoothness():
    return _timed("smoothness", run_smoothness_study)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record ``(criterion, passed, detail)``; summarised after the run."""

    def record(number, title, checks):
        passed = all(ok for _, ok in checks)
        detail = "; ".join(f"{'ok' if ok else 'FAILED'}: {text}" for text, ok in checks)
        line = f"criterion {number} ({title}): {'PASS' if passed else 'FAIL'} | {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
