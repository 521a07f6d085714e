from pathlib import Path

import numpy as np
import pytest

from gridsec import build_jacobian, build_model, load_case, model_for_case, toeplitz_prior

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def two_bus_case():
    return load_case(DATA / "two_bus.case")


@pytest.fixture(scope="session")
def three_bus_case():
    return load_case(DATA / "three_bus.case")


@pytest.fixture(scope="session")
def two_bus(two_bus_case):
    """H = (-1, 1, -1, 1)^T, Sigma_xx = [1], sigma2 = 1."""
    return build_model(build_jacobian(two_bus_case), np.eye(1), 1.0)


@pytest.fixture(scope="session")
def three_bus(three_bus_case):
    H = build_jacobian(three_bus_case)
    return build_model(H, toeplitz_prior(2, 0.5), 0.5)


@pytest.fixture(scope="session")
def ieee14():
    return model_for_case("ieee14", rho=0.1, snr_db=10.0)


@pytest.fixture(scope="session")
def ieee30():
    return model_for_case("ieee30", rho=0.1, snr_db=10.0)


def random_model(rng, m=None, n=None):
    n = n or int(rng.integers(1, 4))
    m = m or n + int(rng.integers(1, 4))
    H = rng.standard_normal((m, n))
    a = rng.standard_normal((n, n))
    return build_model(H, a @ a.T + 0.5 * np.eye(n), float(rng.uniform(0.2, 2.0)))


_CRITERIA = {}


@pytest.fixture
def report(capsys):
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
