from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from minkflow.sphere import build_grid

settings.register_profile(
    "minkflow", max_examples=25, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("minkflow")

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def grid16():
    return build_grid(2, 16, 32)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(2, 32, 64)


@pytest.fixture(scope="session")
def circle64():
    return build_grid(1, 64)


@pytest.fixture
def record():
    """record(criterion, passed, detail): one line in the terminal summary."""
    def _record(criterion: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
