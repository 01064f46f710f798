import numpy as np
import pytest

from pgica.numerics import RngStream


@pytest.fixture
def rng():
    return RngStream(12345, 0)


def se_mean(x):
    x = np.asarray(x)
    return x.std(ddof=1) / np.sqrt(x.size)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        name = report.nodeid.split("::")[-1]
        ok = report.outcome == "passed"
        _ACCEPTANCE.append(f"{props.get('criterion', name)}: {'PASS' if ok else 'FAIL'}  {props.get('detail', '')}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
