import math

import mpmath
import numpy as np
import pytest

from lattice_energy.catalog import load_catalog
from lattice_energy.energy import (
    Potential,
    energy,
    epstein_zeta,
    eval_potential,
    theta_minus_one,
    windowed_energy,
)
from lattice_energy.enumeration import coset_decomposition, min_norm
from lattice_energy.errors import DivergentSum, DomainError, WindowTooSmall
from lattice_energy.forms import PeriodicForm, QuadForm, apply_unimodular

Z1 = QuadForm([[1]])
Z2 = QuadForm([[1, 0], [0, 1]])


def zeta_z2_2():
    return float(4 * mpmath.zeta(2) * mpmath.catalan)


def test_eval_potential_examples():
    assert eval_potential(Potential.exp(1.0), 1.0) == pytest.approx(math.exp(-1))
    assert eval_potential(Potential.power(2.0), 4.0) == pytest.approx(1 / 16)
    with pytest.raises(DomainError):
        eval_potential(Potential.exp(1.0), 0.0)


def test_potential_parse_and_validation():
    assert Potential.parse("exp:c=3.5") == Potential.exp(3.5)
    assert Potential.parse("pow:s=4") == Potential.power(4.0)
    with pytest.raises(ValueError):
        Potential.exp(-1.0)
    with pytest.raises(ValueError):
        Potential.parse("gauss:c=1")


def test_zeta_z2_oracle():
    ev = epstein_zeta(Z2, 2.0)
    assert ev.value == pytest.approx(zeta_z2_2(), rel=1e-10)
    assert ev.tail_bound >= 0 and ev.terms_used > 0


def test_zeta_z1_is_twice_riemann():
    assert epstein_zeta(Z1, 1.0).value == pytest.approx(math.pi ** 2 / 3, rel=1e-10)
    assert epstein_zeta(Z1, 2.5).value == pytest.approx(2 * float(mpmath.zeta(5)), rel=1e-10)


def test_divergent_sum_refused():
    with pytest.raises(DivergentSum):
        epstein_zeta(Z2, 1.0)
    with pytest.raises(DivergentSum):
        energy(PeriodicForm(QuadForm(np.eye(8))), Potential.power(3.9))


def test_homogeneity(d4):
    lam2 = 3.0
    a = epstein_zeta(d4, 3.0).value
    b = epstein_zeta(QuadForm(d4.gram * lam2), 3.0).value
    assert b == pytest.approx(lam2 ** -3.0 * a, rel=1e-10)


def test_theta_z1():
    ref = float(2 * mpmath.nsum(lambda n: mpmath.exp(-mpmath.pi * n * n), [1, mpmath.inf]))
    assert theta_minus_one(Z1, math.pi).value == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(0.086434, abs=1e-6)


def test_theta_z2():
    t3 = 1 + 2 * mpmath.nsum(lambda n: mpmath.exp(-mpmath.pi * n * n), [1, mpmath.inf])
    assert theta_minus_one(Z2, math.pi).value == pytest.approx(float(t3 ** 2 - 1), rel=1e-12)


def test_theta_large_c(e8):
    c = 50 * min_norm(e8)
    ev = theta_minus_one(e8, c)
    assert 0 < ev.value <= 2 * 240 * math.exp(-c * 2)


def test_e8_theta_shells_vs_vectors(e8):
    shells = theta_minus_one(e8, math.pi)
    vectors = theta_minus_one(QuadForm(e8.gram.astype(float)), math.pi)
    assert shells.method != vectors.method
    assert shells.value == pytest.approx(vectors.value, rel=1e-10)


def test_windowed_z1_improves():
    pot = Potential.exp(1.0)
    p = PeriodicForm(Z1)
    ref = energy(p, pot).value
    dev10 = abs(windowed_energy(p, 10, pot) - ref)
    dev20 = abs(windowed_energy(p, 20, pot) - ref)
    assert dev20 < dev10 < 0.5 * ref


def test_windowed_z2_improves():
    pot = Potential.power(2.0)
    p = PeriodicForm(Z2)
    ref = energy(p, pot).value
    assert abs(windowed_energy(p, 30, pot) - ref) < abs(windowed_energy(p, 15, pot) - ref)


def test_window_too_small():
    with pytest.raises(WindowTooSmall):
        windowed_energy(PeriodicForm(Z2), 0.5, Potential.exp(1.0))


@pytest.fixture(scope="module")
def generic2():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    return PeriodicForm(QuadForm(a.T @ a), [[0, 0, 0], [0.3, 0.6, 0.1], [0.7, 0.2, 0.5]])


@pytest.mark.parametrize("pot", [Potential.exp(1.3), Potential.power(2.5)])
def test_invariances(generic2, pot):
    ref = energy(generic2, pot).value
    u = [[1, 1, 0], [0, 1, 0], [2, 1, 1]]
    cases = [
        apply_unimodular(generic2, u),
        generic2.with_translations(generic2.translations + np.array([0.11, 0.4, 0.9])),
        generic2.with_translations(generic2.translations[[2, 0, 1]]),
        PeriodicForm(generic2.q, generic2.translations + np.array([[0, 0, 0], [3, -1, 0], [0, 2, -5]])),
    ]
    for p in cases:
        assert energy(p, pot).value == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("pot", [Potential.exp(2.0), Potential.power(3.0)])
def test_representation_independence(d4, pot):
    one = energy(PeriodicForm(d4), pot).value
    two = energy(coset_decomposition(d4, 2, seed=4), pot).value
    assert two == pytest.approx(one, rel=1e-10)


def test_monotone_in_parameter(a2, d4):
    for q in (a2, d4):
        vals = [energy(PeriodicForm(q), Potential.exp(c)).value for c in (0.5, 1, 2, 4)]
        assert all(x > y for x, y in zip(vals, vals[1:]))
    # scaled to min norm 2 (already the case for a2/d4), p_s decreases in s
    for q in (a2, d4):
        d = q.dim
        vals = [energy(PeriodicForm(q), Potential.power(s)).value for s in (d / 2 + 0.5, d / 2 + 1, d / 2 + 2)]
        assert all(x > y for x, y in zip(vals, vals[1:]))


CATALOG_CUTOFFS = [("zd:3", 6), ("a2", 8), ("d4", 8), ("e8", 8), ("d9plus", 6)]


@pytest.mark.parametrize("name,cut", CATALOG_CUTOFFS)
@pytest.mark.parametrize("pot", [Potential.exp(1.5), "pow"])
def test_tail_bound_is_honest(name, cut, pot):
    p = load_catalog(name)
    if pot == "pow":
        pot = Potential.power(p.dim / 2 + 2)
    small = energy(p, pot, cutoff_norm_sq=cut)
    big = energy(p, pot, cutoff_norm_sq=2 * cut)
    assert abs(big.value - small.value) < small.tail_bound
    assert big.tail_bound <= small.tail_bound


def test_default_tail_target_relative(e8):
    ev = energy(PeriodicForm(e8), Potential.exp(math.pi))
    first = 240 * math.exp(-2 * math.pi)
    assert ev.tail_bound <= 1e-12 * first
