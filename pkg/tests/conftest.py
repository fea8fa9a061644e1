import numpy as np
import pytest

from magtunnel.instanton import find_instantons
from magtunnel.model import ModelParams, QuarticShell
from magtunnel.potentials import SeparableDoubleWell, TwistedValleyWell


@pytest.fixture(scope="session")
def p0():
    return ModelParams(1.0, 0.1, 0.1), QuarticShell(1.0, 1.0)


@pytest.fixture(scope="session")
def separable():
    return SeparableDoubleWell(1.0)


@pytest.fixture(scope="session")
def twisted():
    return TwistedValleyWell()


@pytest.fixture(scope="session")
def twisted_instanton(twisted):
    return find_instantons(None, twisted, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {str(number):>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((str(number).rjust(3), line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
