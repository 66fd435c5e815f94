import functools

import pytest

from lmbic.montecarlo import DgpConfig, run_study

ACCEPTANCE_LINES: list[str] = []

STUDY_SEED = 20181126
STUDY_B = 500


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(criterion, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {criterion}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def cached_study(dgp_id, n, B=STUDY_B, procedures=("lm-bic", "ut")):
    return run_study(DgpConfig(dgp_id, n, seed=STUDY_SEED), B, procedures)


@pytest.fixture(scope="session")
def study():
    return cached_study
