import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from lattice_energy.catalog import load_catalog
from lattice_energy.enumeration import (
    NotALattice,
    PermutationTable,
    coset_decomposition,
    detect_lattice,
    enumerate_shells,
    lattice_gram_of,
    min_norm,
    periodic_difference_shells,
    theta_counts,
)
from lattice_energy.errors import InvalidForm
from lattice_energy.forms import PeriodicForm, QuadForm


def test_z2_shells():
    shells = enumerate_shells(QuadForm(np.eye(2)), 2)
    assert [(s.alpha, s.count) for s in shells] == [(1, 4), (2, 4)]


def test_a2_first_shell(a2):
    shells = enumerate_shells(a2, 2)
    assert len(shells) == 1 and shells[0].alpha == 2 and shells[0].count == 6
    got = {tuple(int(x) for x in v) for v in shells[0].vectors}
    assert got == {(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)}


def test_e8_first_shell_against_box_search(e8):
    shells = enumerate_shells(e8, 2)
    assert len(shells) == 1 and shells[0].count == 240
    # independent brute force over the box |x_i| <= sqrt(2 (Q^-1)_ii)
    qi = np.linalg.inv(e8.gram)
    r = np.floor(np.sqrt(2 * np.diag(qi)) + 1e-9).astype(int)
    g = e8.gram.astype(np.int64)
    tail = np.array(list(itertools.product(*[range(-k, k + 1) for k in r[2:]])), dtype=np.int64)
    count = 0
    for head in itertools.product(*[range(-k, k + 1) for k in r[:2]]):
        x = np.hstack([np.broadcast_to(np.array(head), (len(tail), 2)), tail])
        norms = np.einsum("ni,ij,nj->n", x, g, x)
        count += int(np.sum(norms == 2))
    assert count == 240


def test_shell_vectors_exact_and_antipodal(d4):
    for s in enumerate_shells(d4, 8):
        v = np.asarray(s.vectors)
        assert np.all(np.einsum("ni,ij,nj->n", v, d4.gram, v) == s.alpha)
        assert {tuple(x) for x in v} == {tuple(-x) for x in v}
        assert s.count % 2 == 0
        assert [tuple(x) for x in v] == sorted(tuple(x) for x in v)


def test_float_path_tolerance():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    q = QuadForm(a.T @ a)
    for s in enumerate_shells(q, 10.0):
        v = np.asarray(s.vectors, dtype=float)
        assert np.all(np.abs(np.einsum("ni,ij,nj->n", v, q.gram, v) - s.alpha) <= 1e-9 * s.alpha)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_zd_counts_match_direct_loop(d):
    q = QuadForm(np.eye(d))
    got = {int(s.alpha): s.count for s in enumerate_shells(q, 20)}
    r = int(np.sqrt(20))
    direct = Counter()
    for x in itertools.product(range(-r, r + 1), repeat=d):
        n = sum(t * t for t in x)
        if 0 < n <= 20:
            direct[n] += 1
    assert got == dict(direct)


def test_invalid_form_rejected():
    with pytest.raises(InvalidForm):
        enumerate_shells(np.array([[1.0, 2.0], [2.0, 1.0]]), 2)


def test_min_norm_examples(e8):
    assert min_norm(QuadForm(np.eye(5))) == 1
    assert min_norm(e8) == 2


@pytest.mark.slow
def test_leech_min_norm():
    q = load_catalog("leech").q
    assert min_norm(q) == 4


def test_detect_lattice_trivial():
    t = detect_lattice(PeriodicForm(QuadForm(np.eye(2))))
    assert isinstance(t, PermutationTable)
    assert t.row_one_based(1) == [1]


def test_detect_lattice_z2_two_cosets(z2_two_cosets):
    t = detect_lattice(z2_two_cosets)
    assert isinstance(t, PermutationTable)
    assert t.row_one_based(1) == [1, 2]
    assert t.row_one_based(2) == [2, 1]
    assert t.cycles(2) == [(1, 2)]


def test_detect_lattice_d9plus():
    res = detect_lattice(load_catalog("d9plus"))
    assert isinstance(res, NotALattice)
    assert not res


def test_sigma_composition_consistent(d4):
    p = coset_decomposition(d4, 4, seed=3)
    t = detect_lattice(p)
    u = p.translations_exact
    for j in range(4):
        for k in range(4):
            for i in range(4):
                target = [a - b - c for a, b, c in zip(u[i], u[k], u[j])]
                got = u[t.sigma[k][t.sigma[j][i]]]
                assert all((x - y).denominator == 1 for x, y in zip(got, target))


def test_lattice_iff_differences_close(d4):
    # Lambda - Lambda = Lambda on a window: every difference of two points of the set is again a point
    for p, expect in ((coset_decomposition(d4, 2, seed=1), True), (load_catalog("d9plus"), False)):
        u = p.translations_exact
        members = {tuple(x - int(np.floor(x)) for x in row) for row in u}
        closed = all(tuple((a - b) - int(np.floor(a - b)) for a, b in zip(u[i], u[j])) in members
                     for i in range(p.m) for j in range(p.m))
        assert closed == expect
        assert bool(detect_lattice(p)) == expect


def test_periodic_difference_shells_m1_matches_shells(a2):
    got = periodic_difference_shells(PeriodicForm(a2), 6)
    ref = enumerate_shells(a2, 6)
    assert [(s.alpha, s.count) for s in got[(0, 0)]] == [(s.alpha, s.count) for s in ref]


def test_periodic_difference_shells_z2_pair(z2_two_cosets):
    got = periodic_difference_shells(z2_two_cosets, 1)
    shells = got[(0, 1)]
    assert len(shells) == 1 and shells[0].alpha == 1 and shells[0].count == 2
    vecs = sorted(tuple(float(x) for x in v) for v in shells[0].vectors)
    assert vecs == [(-0.5, 0.0), (0.5, 0.0)]


def test_periodic_difference_shells_same_coset_below_min(z2_two_cosets):
    got = periodic_difference_shells(z2_two_cosets, 0.5)
    assert got[(0, 0)] == []


@pytest.mark.parametrize("m,seed", [(2, 0), (3, 1), (4, 2)])
def test_refinement_invariance(a2, m, seed):
    p = coset_decomposition(a2, m, seed)
    union = Counter()
    for (i, j), shells in periodic_difference_shells(p, 12).items():
        if i == 0:
            for s in shells:
                union[Fraction(s.alpha).limit_denominator(1000)] += s.count
    ref = {Fraction(s.alpha).limit_denominator(1000): s.count for s in enumerate_shells(a2, 12)}
    assert dict(union) == ref
    assert lattice_gram_of(p).det == pytest.approx(a2.det)


def test_theta_counts_e8_divisor_sums(e8):
    counts = dict(theta_counts(e8, 40))
    for k in range(1, 21):
        sigma3 = sum(x ** 3 for x in range(1, k + 1) if k % x == 0)
        assert counts[Fraction(2 * k)] == 240 * sigma3
