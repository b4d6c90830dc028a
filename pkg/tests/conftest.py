import numpy as np
import pytest

from markedgof.randomness import SeedSpec, derive_stream


@pytest.fixture
def gen():
    return derive_stream(SeedSpec(12345, 0))


@pytest.fixture
def make_gen():
    def factory(stream=0, root=12345):
        return derive_stream(SeedSpec(root, stream))
    return factory


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
