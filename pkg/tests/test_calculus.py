import math

import mpmath
import numpy as np
import pytest

from lattice_energy.calculus import (
    f_and_g,
    finite_difference,
    gradient_at_lattice,
    gradient_general,
    hessian_at_lattice,
    hessian_general,
    hessian_split_design,
    shell_counts,
)
from lattice_energy.catalog import load_catalog
from lattice_energy.energy import Potential, energy, epstein_zeta
from lattice_energy.enumeration import coset_decomposition
from lattice_energy.errors import DesignHypothesisFailed, NotALatticeError
from lattice_energy.forms import PeriodicForm, QuadForm, TangentBasis

from conftest import random_form

Z2 = QuadForm([[1, 0], [0, 1]])
RECT = QuadForm([[1, 0], [0, 4]])


def rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(np.max(np.abs(b)), 1e-300))


@pytest.mark.parametrize("name", ["a2", "d4", "e8"])
def test_gradient_vanishes_on_2design_lattices(name):
    q = load_catalog(name).q
    for pot in (Potential.exp(1.0), Potential.power(q.dim / 2 + 2)):
        g = gradient_at_lattice(q, pot, cutoff=20.0)
        assert np.max(np.abs(g)) <= 1e-12


def test_gradient_rectangular_nonzero_and_matches_fd():
    pot = Potential.exp(1.0)
    p = PeriodicForm(RECT)
    g = gradient_general(p, pot, cutoff=60.0)
    fd = finite_difference(p, pot, 1, cutoff=60.0, richardson=True)
    assert g.gradient_norm > 1e-3
    assert rel(g.gradient, fd.gradient) <= 1e-6
    # moving along diag(1, -1) lengthens the short axis and shortens the long one
    hmat = gradient_at_lattice(RECT, pot, cutoff=60.0)
    assert np.sum(hmat * np.diag([1.0, -1.0])) < 0


def test_gradient_homogeneity_ps():
    s, lam2 = 3.0, 4.0
    pot = Potential.power(s)
    g1 = gradient_general(PeriodicForm(RECT), pot).gradient
    g2 = gradient_general(PeriodicForm(QuadForm(RECT.gram * lam2)), pot).gradient
    assert np.allclose(g2, lam2 ** -s * g1, rtol=1e-9, atol=1e-14)


@pytest.mark.parametrize("name,m", [("a2", 3), ("d4", 2), ("e8", 2)])
def test_full_gradient_vanishes_with_cosets(name, m):
    q = load_catalog(name).q
    p = coset_decomposition(q, m, seed=1)
    for pot in (Potential.exp(math.pi), Potential.power(q.dim / 2 + 2)):
        gh = gradient_general(p, pot, cutoff=16.0 if name == "e8" else None)
        assert gh.gradient_norm <= 1e-10


def test_displaced_coset_gradient_points_back(z2_two_cosets):
    pot = Potential.exp(1.0)
    p = z2_two_cosets.with_translations([[0, 0], [0.51, 0]])
    g = gradient_general(p, pot)
    tb = g.basis
    _, tc = tb.split(g.gradient)
    # the energy rises when moving further away, so -gradient points back to 1/2
    assert tc[0, 0] > 1e-3 and abs(tc[0, 1]) < 1e-12
    fd = finite_difference(p, pot, 1, richardson=True)
    assert rel(g.gradient, fd.gradient) <= 1e-6


def test_gradient_equivariant_under_common_translation():
    rng = np.random.default_rng(4)
    p = random_form(rng, 3, 3)
    pot = Potential.exp(0.8)
    a = gradient_general(p, pot).gradient
    b = gradient_general(p.with_translations(p.translations + np.array([0.2, 0.7, 0.45])), pot).gradient
    assert np.allclose(a, b, rtol=1e-9, atol=1e-13)


def test_common_translation_is_flat():
    rng = np.random.default_rng(6)
    p = random_form(rng, 2, 2)
    pot = Potential.exp(1.0)
    h = 1e-5
    up = energy(p.with_translations(p.translations + h), pot, cutoff_norm_sq=40.0).value
    dn = energy(p.with_translations(p.translations - h), pot, cutoff_norm_sq=40.0).value
    assert abs(up - dn) / (2 * h) <= 1e-8


@pytest.mark.parametrize("i", range(20))
def test_gradient_matches_fd_on_random_forms(i):
    rng = np.random.default_rng(100 + i)
    d = 2 + i % 3
    m = 1 + i % 3
    p = random_form(rng, d, m)
    pot = Potential.exp(1.0 + 0.5 * (i % 4)) if i % 2 == 0 else Potential.power(d / 2 + 1.5)
    g = gradient_general(p, pot, cutoff=25.0)
    fd = finite_difference(p, pot, 1, step=1e-5, cutoff=g.cutoff_norm_sq)
    assert rel(g.gradient, fd.gradient) <= 1e-5


def test_e8_hessian_h_block_positive(e8):
    gh = hessian_at_lattice(PeriodicForm(e8), Potential.exp(2 * math.pi))
    assert np.linalg.eigvalsh(gh.h_block)[0] > 0


def test_z2_ps_hessian_against_fd():
    pot = Potential.power(2.0)
    p = PeriodicForm(Z2)
    gh = hessian_at_lattice(p, pot, cutoff=400.0)
    fd = finite_difference(p, pot, 2, cutoff=400.0, richardson=True)
    assert rel(gh.hessian, fd.hessian) <= 1e-5


def test_d4_two_cosets_hessian(d4):
    p = coset_decomposition(d4, 2, seed=0)
    gh = hessian_at_lattice(p, Potential.exp(2 * math.pi))
    assert np.linalg.eigvalsh(gh.hessian)[0] > 0
    assert np.max(np.abs(gh.cross_block)) < 1e-10
    assert np.allclose(gh.hessian, gh.hessian.T, atol=1e-10)


def test_hessian_at_lattice_rejects_non_lattice():
    with pytest.raises(NotALatticeError):
        hessian_at_lattice(load_catalog("d9plus"), Potential.exp(3.0), cutoff=6.0)


def test_fd_hessian_symmetric(z2_two_cosets):
    fd = finite_difference(z2_two_cosets.with_translations([[0, 0], [0.45, 0.1]]), Potential.exp(1.0), 2)
    assert np.max(np.abs(fd.hessian - fd.hessian.T)) <= 1e-6


@pytest.mark.parametrize("i", range(4))
def test_hessian_matches_fd_on_random_forms(i):
    rng = np.random.default_rng(200 + i)
    p = random_form(rng, 2 + i % 2, 1 + i % 3)
    pot = Potential.exp(0.9)
    gh = hessian_general(p, pot, cutoff=40.0)
    fd = finite_difference(p, pot, 2, cutoff=40.0, richardson=True)
    assert rel(gh.hessian, fd.hessian) <= 1e-5


@pytest.mark.parametrize("name,c", [("d4", 1.0), ("d4", 2 * math.pi), ("e8", math.pi), ("e8", 2 * math.pi)])
def test_h_block_matches_split(name, c):
    q = load_catalog(name).q
    gh = hessian_at_lattice(PeriodicForm(q), Potential.exp(c), cutoff=30.0 if name == "e8" else None)
    sp = hessian_split_design(q, c / math.pi)
    w = np.linalg.eigvalsh(gh.h_block)
    assert rel(w, np.full_like(w, sp.h_eigenvalue)) <= 1e-8


def test_ps_h_block_coefficient_d4(d4):
    s = 4.0
    gh = hessian_at_lattice(PeriodicForm(d4), Potential.power(s))
    coef = s * (s - 2) / (4 * 6) * epstein_zeta(d4, s).value
    w = np.linalg.eigvalsh(gh.h_block)
    assert rel(w, np.full_like(w, 2 * coef)) <= 1e-8


@pytest.mark.parametrize("name", ["d4", "e8"])
def test_g_is_minus_dF(name):
    q = load_catalog(name).q
    d = q.dim
    counts = shell_counts(q, 700)
    for y in (0.25, 0.5, 1, 2, 4):
        h = mpmath.mpf(y) * mpmath.mpf("1e-6")
        fp, _ = f_and_g(counts, mpmath.mpf(y) + h, d)
        fm, _ = f_and_g(counts, mpmath.mpf(y) - h, d)
        sp = hessian_split_design(q, y)
        assert float(abs(-(fp - fm) / (2 * h) - sp.G_mp) / abs(sp.G_mp)) <= 1e-6


def test_split_examples(e8):
    sp = hessian_split_design(e8, 1.0)
    assert sp.F_value > 0 and sp.G_value > 0
    assert sp.lattice_coefficient == pytest.approx(sp.G_value)
    for y in (8 / (2 * math.pi * 2) * 1.01, 2.0, 5.0):
        assert hessian_split_design(e8, y).F_value > 0


def test_split_storage_forms_agree(d4):
    sp = hessian_split_design(d4, 0.7, m=2)
    rng = np.random.default_rng(0)
    h = rng.standard_normal((4, 4))
    h = h + h.T
    h -= np.trace(h) / 4 * np.eye(4)
    a, b = sp.taylor_term(h, 0.3), sp.stored_form(h, 0.3)
    assert a == pytest.approx(b, rel=1e-12)


def test_split_requires_4designs():
    with pytest.raises(DesignHypothesisFailed):
        hessian_split_design(Z2, 1.0)
