from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracrelax.verification import benchmark_problem, random_stable_triple

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bench():
    """Scalar problem D^0.5 x = u, x(0) = 0, g = x^2, U = {-1, 1}."""
    return benchmark_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stable_triple(rng):
    return random_stable_triple(rng)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
