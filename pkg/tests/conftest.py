from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from restoresched.harness import FixtureSpec, make_fixture
from restoresched.videoio import Video

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# (number, title, passed, elapsed_s, limit_s) per acceptance criterion
ACCEPTANCE: list[tuple[int, str, bool, float, float]] = []


@pytest.fixture
def criterion():
    """Time a criterion block, record the outcome and enforce its runtime limit."""

    @contextmanager
    def run(number: int, title: str, limit_s: float):
        start = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            passed = ok and elapsed < limit_s
            ACCEPTANCE.append((number, title, passed, elapsed, limit_s))
            print(f"\ncriterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  "
                  f"({elapsed:.2f} s, limit {limit_s:g} s)")
        assert elapsed < limit_s, f"criterion {number} took {elapsed:.1f} s (limit {limit_s} s)"

    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, elapsed, limit in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  "
                                    f"({elapsed:.2f} s, limit {limit:g} s)")


@pytest.fixture
def checker() -> Video:
    return make_fixture(FixtureSpec("checker", 32, 32, 8, seed=1))


@pytest.fixture
def fixture64() -> Video:
    return make_fixture(FixtureSpec("checker", 64, 64, 8, seed=2))


def _uniform(value: int, width: int = 8, height: int = 8, frames: int = 4, fps: float = 10.0) -> Video:
    return Video(np.full((frames, height, width, 3), value, dtype=np.uint8), fps)


@pytest.fixture
def uniform():
    """Factory for constant-colour videos."""
    return _uniform
