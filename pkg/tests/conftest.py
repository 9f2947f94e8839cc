import numpy as np
import pytest
from hypothesis import settings

from sumorl.data import OfflineDataset

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=50, d_s=3, d_a=2):
    return OfflineDataset(rng.normal(size=(n, d_s)), rng.uniform(-1, 1, size=(n, d_a)),
                          rng.uniform(0, 1, size=n), rng.normal(size=(n, d_s)),
                          rng.random(n) < 0.1)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    line = f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
