import numpy as np
import pytest


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record(request):
    """Store one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.acceptance_lines

    def _record(n, passed, detail=""):
        lines[n] = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        print(lines[n])
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
