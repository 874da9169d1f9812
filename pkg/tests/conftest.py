import numpy as np
import pytest

from deformslice import SliceEvaluator, synthesize_params


@pytest.fixture(scope="session")
def fixture_x():
    """Acceptance fixture: 16x56x56 standard-normal feature map, seed 1."""
    return np.random.default_rng(1).standard_normal((16, 56, 56))


@pytest.fixture(scope="session")
def fixture_params():
    return synthesize_params(d_model=16, n_heads=2, n_points=4, offset_scale=14.0, seed=0)


@pytest.fixture(scope="session")
def slice_evaluator(fixture_x, fixture_params):
    # shared memo so the expensive exhaustive pass runs once per session
    return SliceEvaluator(fixture_x, fixture_params)


@pytest.fixture
def small_x():
    return np.random.default_rng(7).standard_normal((8, 24, 20))


@pytest.fixture
def small_params():
    return synthesize_params(d_model=8, n_heads=2, n_points=3, offset_scale=4.0, seed=3)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Log one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}"
        _ACCEPTANCE.append(line + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE:
        terminalreporter.write_line(line)
