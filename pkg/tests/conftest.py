import sys

import numpy as np
import pytest
from hypothesis import settings

from magloc import sphharm

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rule16():
    return sphharm.build_quadrature(16)


@pytest.fixture(scope="session")
def rule32():
    return sphharm.build_quadrature(32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_directions(rng, k):
    v = rng.standard_normal((k, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, _), (passed, detail) in sorted(results.items()):
        terminalreporter.write_line(f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
