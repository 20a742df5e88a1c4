import numpy as np
import pytest

from sogdd.imagecore import GrayImage

from helpers import block_array

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'} - {detail}")




@pytest.fixture
def block_image():
    return GrayImage(block_array())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
