import numpy as np
import pytest

from landau_lab.coefficients import CoefficientField, PotentialConfig
from landau_lab.galerkin import assemble


@pytest.fixture(scope="session")
def field_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("field_cache")


@pytest.fixture(scope="session")
def field_by_gamma(field_cache):
    built = {}

    def get(gamma: float) -> CoefficientField:
        if gamma not in built:
            built[gamma] = CoefficientField.cached(PotentialConfig(gamma), field_cache)
        return built[gamma]

    return get


@pytest.fixture(scope="session")
def field(field_by_gamma):
    return field_by_gamma(-1.0)


@pytest.fixture(scope="session")
def system6(field):
    return assemble(6, field)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion and return the verdict."""

    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        print(ACCEPTANCE[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
