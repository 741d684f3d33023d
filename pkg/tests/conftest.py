import numpy as np
import pytest

from itoffoli.config import parse_config

TWO_PI = 2 * np.pi
KHZ = TWO_PI * 1e3


@pytest.fixture(scope="session")
def fig2_spec():
    return parse_config(preset="fig2")


@pytest.fixture(scope="session")
def fig2_config(fig2_spec):
    return fig2_spec.gate


@pytest.fixture(scope="session")
def fig2_result(fig2_config):
    from itoffoli.evolution import itoffoli_sequence
    return itoffoli_sequence(fig2_config)


def random_unitary(d, rng):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed again in the terminal summary."""
    def record(name: str, passed: bool, detail: str = ""):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        CRITERIA.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
