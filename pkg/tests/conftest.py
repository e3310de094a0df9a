"""Shared fixtures and the acceptance-criteria report.

The two medium-budget scaling fits are the expensive runs (minutes); they
are computed once per session and shared by the complexity-order and
monotonicity criteria. After the run, every test named test_criterion_*
gets one PASS/FAIL line in a dedicated terminal section.
"""

import time

import pytest

from mcmclab.lab import BUDGETS, scaling_fit
from mcmclab.targets import get_target

_criterion_results = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    # duration sums all phases so a criterion whose cost lives in a
    # session-fixture setup (the scaling fits) reports its real wall time
    outcome, duration = _criterion_results.get(name, ("passed", 0.0))
    if report.when == "call" or report.outcome != "passed":
        outcome = report.outcome
    _criterion_results[name] = (outcome, duration + report.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_criterion_results):
        outcome, duration = _criterion_results[name]
        label = name[len("test_"):]
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"{label}: {status} ({duration:.1f}s)")


@pytest.fixture(scope="session")
def rwm_scaling():
    """Medium-budget random-walk complexity fit; returns (fit, wall seconds)."""
    t0 = time.perf_counter()
    fit = scaling_fit(
        "rwm", (8, 16, 32, 64, 128), 2.38, 0.2, BUDGETS["medium"],
        target=get_target("std_normal"), seed=20240816, threads=4,
    )
    return fit, time.perf_counter() - t0


@pytest.fixture(scope="session")
def mala_scaling():
    """Medium-budget Langevin complexity fit with per-dimension calibration."""
    t0 = time.perf_counter()
    fit = scaling_fit(
        "mala", (8, 16, 32, 64, 128, 256), "calibrated", 0.2, BUDGETS["medium"],
        target=get_target("std_normal"), seed=20240816, threads=4,
    )
    return fit, time.perf_counter() - t0
