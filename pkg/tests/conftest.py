import pytest

from ehbattery import NodeRates


@pytest.fixture
def example_rates():
    """Worked example: 0.72 DP/s, 0.8 EP/s, 0.9 connections/s."""
    return NodeRates(lambda_D=0.72, lambda_E=0.8, lambda_C=0.9)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
