import numpy as np
import pytest

from hppseg.pipeline import PipelineConfig, run_pipeline
from hppseg.synthetic import moving_square

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail=""):
    status = "PASS" if passed is True else ("SKIP" if passed is None else "FAIL")
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def square_video():
    return moving_square()


@pytest.fixture(scope="session")
def square_result(square_video):
    return run_pipeline(square_video.video, PipelineConfig(), debug_stages=True, threads=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
