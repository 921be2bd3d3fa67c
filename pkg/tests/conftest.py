import numpy as np
import pytest

from hamlearn import blockenc


@pytest.fixture(autouse=True)
def encoding_audit():
    """Every encoding built during a test must meet its claimed error."""
    blockenc.AUDIT.enabled = True
    blockenc.AUDIT.records.clear()
    yield blockenc.AUDIT
    bad = blockenc.AUDIT.failures()
    blockenc.AUDIT.enabled = False
    assert not bad, f"encodings above their claimed error: {bad[:5]}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[num])
