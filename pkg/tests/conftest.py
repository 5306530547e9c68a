import numpy as np
import pytest

from lattice_energy.catalog import load_catalog
from lattice_energy.forms import PeriodicForm, QuadForm


@pytest.fixture(scope="session")
def a2():
    return load_catalog("a2").q


@pytest.fixture(scope="session")
def d4():
    return load_catalog("d4").q


@pytest.fixture(scope="session")
def e8():
    return load_catalog("e8").q


@pytest.fixture
def z2_two_cosets():
    # Z^2 as the sublattice 2Z x Z plus the coset (1/2, 0) in sublattice coordinates
    return PeriodicForm(QuadForm([[4, 0], [0, 1]]), [[0, 0], ["1/2", 0]])


def random_form(rng, d, m):
    a = rng.standard_normal((d, d)) + 2 * np.eye(d)
    g = a.T @ a
    q = QuadForm(g / np.linalg.det(g) ** (1 / d))
    while True:
        u = rng.random((m, d))
        u[0] = 0
        try:
            return PeriodicForm(q, u)
        except Exception:
            continue
