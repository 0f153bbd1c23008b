import numpy as np
import pytest

from tessera import AnalyticGaussianPredictor, AnalyticTarget, Flat, make_linear_schedule

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(name, ok, detail=""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}")


@pytest.fixture
def sched4():
    return make_linear_schedule(4, 0.1, 0.4)


@pytest.fixture
def sched2():
    from tessera import NoiseSchedule

    return NoiseSchedule.from_betas([0.1, 0.2])


@pytest.fixture(scope="session")
def default_sched():
    return make_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
