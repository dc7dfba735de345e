import os
import time

import pytest

from nllvm.density import TruncatedNormal
from nllvm.experiments import RateStudyConfig, run_rate_study

# the full studies run their (n, replicate) cells on this many processes
STUDY_WORKERS = int(os.environ.get("NLLVM_STUDY_WORKERS", "8"))

# one "PASS/FAIL criterion: details" line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def compact_study():
    """The full contraction study on the truncated normal truth, run once per session.

    Returns ``(config, result, seconds)``.
    """
    cfg = RateStudyConfig(truth=TruncatedNormal(), workers=STUDY_WORKERS)
    t0 = time.perf_counter()
    res = run_rate_study(cfg)
    return cfg, res, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
