import numpy as np
import pytest

from tclevy.levy import LevyComponentSpec, NigParams


@pytest.fixture
def nig1():
    return NigParams(1.0, -0.05, 1.0, -0.5)


@pytest.fixture
def triple():
    """The three-component NIG model used throughout the simulation study."""
    return [
        LevyComponentSpec(NigParams(1.0, -0.05, 1.0, -0.5)),
        LevyComponentSpec(NigParams(3.0, -0.05, 1.0, -1.0)),
        LevyComponentSpec(NigParams(1.0, -0.03, 1.0, 2.0)),
    ]


def within_se(samples, target, k=3.0):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - target) < k * se


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
