import numpy as np
import pytest
from hypothesis import settings

from iso_collapse.lie_rep import build_spin_irrep, build_su3_irrep

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")

SPINS = [0.5, 1, 1.5, 2, 2.5, 5]


@pytest.fixture(scope="session")
def su3_defining():
    return build_su3_irrep("defining")


@pytest.fixture(scope="session")
def su3_adjoint():
    return build_su3_irrep("adjoint")


@pytest.fixture(params=SPINS, ids=lambda j: f"j={j}")
def spin_gen(request):
    return build_spin_irrep(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_matrix(rng, n, scale=1.0):
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def random_hermitian(rng, n, scale=1.0):
    a = random_matrix(rng, n, scale)
    return (a + a.conj().T) / 2


def pytest_terminal_summary(terminalreporter):
    acc = __import__("sys").modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        passed, detail = acc.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
