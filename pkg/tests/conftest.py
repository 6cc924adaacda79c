import math

import numpy as np
import pytest

from rfhartree.distributions import MomentumDistribution, compute_hf_profile


@pytest.fixture(scope="session")
def fermi3():
    return MomentumDistribution.fermi_zero(1.0, 3)


@pytest.fixture(scope="session")
def fermi3_profile(fermi3):
    return compute_hf_profile(fermi3, 200.0, 4000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


SQRT_2_PI = math.sqrt(2 / math.pi)


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
