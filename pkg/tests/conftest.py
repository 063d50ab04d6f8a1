import numpy as np
import pytest

from scareth.basis import enumerate_basis
from scareth.constraint import build_constrained_hamiltonian
from scareth.model import ModelSpec
from scareth.spectra import diagonalize


def chain(n, j=1, **kw):
    return ModelSpec("spin-chain-blockade", j=j, n_sites=n, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def spin1_n4():
    spec = chain(4)
    basis = enumerate_basis(spec)
    return spec, basis, diagonalize(build_constrained_hamiltonian(spec, basis), basis)


@pytest.fixture(scope="session")
def spin1_n5():
    spec = chain(5)
    basis = enumerate_basis(spec)
    return spec, basis, diagonalize(build_constrained_hamiltonian(spec, basis), basis)


@pytest.fixture(scope="session")
def spin1_n7():
    spec = chain(7)
    basis = enumerate_basis(spec)
    return spec, basis, diagonalize(build_constrained_hamiltonian(spec, basis), basis)


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
