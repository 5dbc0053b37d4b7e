import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "wunt",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "wunt"))

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def toy_csv():
    return os.path.join(DATA_DIR, "toy10.csv")


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


# -- acceptance summary: one PASS/FAIL line per criterion

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(pytestconfig):
    """``record(criterion, ok, detail)`` collects parts of an acceptance criterion."""
    log = pytestconfig.stash.setdefault(_ACCEPTANCE, {})

    def record(criterion, ok, detail):
        log.setdefault(criterion, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(log):
        parts = log[crit]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {crit}: {status}  ({detail})")
