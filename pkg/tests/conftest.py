import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in range(1, 10):
        outcomes = module.RESULTS.get(criterion)
        if outcomes is None:
            terminalreporter.write_line(f"criterion {criterion}: NOT RUN")
        else:
            terminalreporter.write_line(f"criterion {criterion}: {'PASS' if all(outcomes) else 'FAIL'}")
