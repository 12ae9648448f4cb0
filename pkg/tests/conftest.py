from fractions import Fraction

import numpy as np
import pytest

from qmalattice.lattice import GridSpec, Lattice, random_lattice, yes_threshold
from qmalattice.witness import build_honest_witness

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def z15():
    return Lattice.scaled_identity(2, 15)


@pytest.fixture(scope="session")
def grid7():
    return GridSpec(7, 1)


@pytest.fixture(scope="session")
def honest15(z15, grid7):
    return build_honest_witness(z15, grid7)


@pytest.fixture(scope="session")
def lattice3():
    """A random 3-dim lattice separated enough for the honest witness."""
    return random_lattice(3, np.random.Generator(np.random.Philox(11)), scale=Fraction(12),
                          min_length=yes_threshold(3))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


@pytest.fixture
def acceptance_line():
    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
