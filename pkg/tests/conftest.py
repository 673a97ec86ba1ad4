import numpy as np
import pytest

from hazdiff import CompetingRisksSample

ACCEPTANCE_LINES: list[str] = []


def random_sample(rng, n=30, p=2, n_causes=2, censor_frac=0.3, treated=0.5):
    """Small random competing-risks sample with both arms and every cause present."""
    while True:
        time = rng.exponential(1.0, n) + 1e-3
        status = np.where(rng.uniform(size=n) < censor_frac, 0, rng.integers(1, n_causes + 1, n))
        a = (rng.uniform(size=n) < treated).astype(int)
        Z = rng.uniform(0, 1, (n, p))
        counts = np.bincount(status, minlength=n_causes + 1)
        if 0 < a.sum() < n and np.all(counts[1:] > 0) and counts[0] > 0:
            return CompetingRisksSample(time, status, a, Z, n_causes=n_causes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
