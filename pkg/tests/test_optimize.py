import math

import numpy as np
import pytest

from lattice_energy.catalog import load_catalog
from lattice_energy.energy import Potential, energy
from lattice_energy.enumeration import coset_decomposition
from lattice_energy.errors import LineSearchStalled
from lattice_energy.forms import PeriodicForm, QuadForm, TangentBasis, apply_unimodular, retract
from lattice_energy.optimize import descend, perturbation_sweep, random_unit_directions

C = 2 * math.pi


def test_descend_at_critical_point(d4):
    p = PeriodicForm(d4)
    tr = descend(p, Potential.exp(C))
    assert tr.converged and tr.iterations <= 1
    assert tr.final_energy == pytest.approx(tr.start_energy, rel=1e-14)


def perturbed_d4(d4, seed, mag=1e-2):
    base = coset_decomposition(d4, 2, seed=0)
    tb = TangentBasis(4, 2)
    c = random_unit_directions(tb, 1, seed)[0]
    return base, retract(base, tb.to_tangent(base, c), mag)


def test_descend_recovers_d4(d4):
    base, start = perturbed_d4(d4, 7)
    pot = Potential.exp(C)
    e0 = energy(base, pot).value
    tr = descend(start, pot)
    assert tr.converged
    assert abs(tr.final_energy - e0) / e0 <= 1e-8
    es = [e for e, _, _ in tr.iterates]
    assert all(b < a for a, b in zip(es, es[1:]))
    for e, g, s in tr.iterates[1:]:
        assert s > 0
    assert tr.final_form.q.det == pytest.approx(start.q.det, rel=1e-9)


def test_determinant_preserved_along_trace():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    p = PeriodicForm(QuadForm(a.T @ a))
    tr = descend(p, Potential.exp(1.0), grad_tol=1e-7, max_iters=50)
    assert tr.final_form.q.det == pytest.approx(p.q.det, rel=1e-9)


def test_rectangle_descends_to_hexagonal():
    pot = Potential.power(3.0)
    tr = descend(PeriodicForm(QuadForm([[1, 0], [0, 4]])), pot)
    hexagonal = QuadForm(np.array([[2.0, 1.0], [1.0, 2.0]]) * 2 / math.sqrt(3))
    ref = energy(PeriodicForm(hexagonal), pot).value
    assert tr.converged
    assert abs(tr.final_energy - ref) / ref <= 1e-6


def test_unimodular_invariance(d4):
    base, start = perturbed_d4(d4, 3)
    pot = Potential.exp(C)
    u = np.eye(4, dtype=int)
    u[0, 2] = 1
    u[3, 1] = -1
    a = descend(start, pot).final_energy
    b = descend(apply_unimodular(start, u), pot).final_energy
    assert b == pytest.approx(a, rel=1e-8)


def test_trace_reproducible(d4):
    _, start = perturbed_d4(d4, 11)
    pot = Potential.exp(C)
    assert descend(start, pot).iterates == descend(start, pot).iterates


def test_trace_csv(d4):
    _, start = perturbed_d4(d4, 2)
    text = descend(start, Potential.exp(C), max_iters=3, grad_tol=1e-30).to_csv().splitlines()
    assert text[0] == "iteration,energy,gradient_norm,step_size" and len(text) == 5
    for row in text[1:]:
        assert all(math.isfinite(float(x)) for x in row.split(","))


def test_line_search_stall_raises():
    # a tolerance far below the attainable gradient accuracy cannot be met
    p = PeriodicForm(QuadForm([[1.0, 0.3], [0.3, 2.0]]))
    with pytest.raises(LineSearchStalled):
        descend(p, Potential.exp(1.0), grad_tol=1e-30, max_iters=10_000)


def test_sweep_zero_magnitude(d4):
    s = perturbation_sweep(d4, 2, Potential.exp(C), 0.0, 5, seed=1)
    assert np.all(s.deltas == 0)


def test_sweep_e8_positive(e8):
    s = perturbation_sweep(e8, 2, Potential.exp(C), 1e-2, 50, seed=42)
    assert s.min_delta > 0 and s.n_negative == 0


def test_sweep_reports_without_sign_contract():
    z2 = QuadForm([[1, 0], [0, 1]])
    s = perturbation_sweep(z2, 2, Potential.exp(0.5), 1e-2, 10, seed=0)
    assert len(s.deltas) == 10 and "magnitude" in s.to_json()


def test_directions_unit_norm():
    tb = TangentBasis(3, 2)
    dirs = random_unit_directions(tb, 20, 0)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
