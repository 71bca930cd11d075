import numpy as np
import pytest

from treeace.models import SpectralDensityQD, discretize_bosonic, fermionic_mode
from treeace.ptmpo import PTMPO


def random_ptmpo(rng, bonds, sys_dim=2):
    """PT-MPO with random complex entries and the given bond dims ``d_0 .. d_n``."""
    d2 = sys_dim ** 2
    tensors = []
    for l in range(len(bonds) - 1):
        shape = (bonds[l + 1], bonds[l], d2, d2)
        tensors.append(rng.normal(size=shape) + 1j * rng.normal(size=shape))
    return PTMPO(tuple(tensors), sys_dim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def two_boson_modes():
    return discretize_bosonic(SpectralDensityQD(), 7.0, 2, 2, 4.0, 0.1)


@pytest.fixture(scope="session")
def three_fermion_modes():
    occupations = (True, False, True)
    return [fermionic_mode(w, g, 0.1, o)
            for w, g, o in zip([-1.0, 0.3, 0.7], [0.8, 0.6, 0.5], occupations)]


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
GROUND = np.diag([1.0, 0.0]).astype(complex)
EXCITED_PROJ = np.diag([0.0, 1.0]).astype(complex)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
