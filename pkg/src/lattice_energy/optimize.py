"""Retraction-based gradient descent and perturbation sweeps at fixed determinant."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calculus import _derivatives
from .energy import DEFAULT_MAX_TERMS, Potential, SumPlan
from .enumeration import coset_decomposition, _as_quadform
from .errors import LineSearchStalled, PerturbationTooLarge
from .forms import PeriodicForm, TangentBasis, retract

ARMIJO = 1e-4
MIN_STEP = 1e-14


@dataclass
class DescentTrace:
    """Energy, gradient norm and accepted step size per iteration."""

    iterates: list
    final_form: PeriodicForm
    converged: bool
    iterations: int
    cutoff_norm_sq: float = 0.0
    tail_bound: float = 0.0

    @property
    def start_energy(self) -> float:
        return self.iterates[0][0]

    @property
    def final_energy(self) -> float:
        return self.iterates[-1][0]

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_energy": self.final_energy,
            "final_gradient_norm": self.iterates[-1][1],
            "cutoff_norm_sq": self.cutoff_norm_sq,
            "tail_bound": self.tail_bound,
            "iterates": [{"energy": e, "gradient_norm": g, "step_size": s} for e, g, s in self.iterates],
            "final_form": self.final_form.to_json(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "energy", "gradient_norm", "step_size"])
        for i, (e, g, s) in enumerate(self.iterates):
            w.writerow([i, repr(float(e)), repr(float(g)), repr(float(s))])
        return buf.getvalue()


def _plan(start: PeriodicForm, pot: Potential, cutoff, target_tail, max_terms) -> SumPlan:
    # one frozen set of difference vectors keeps energy and gradient consistent
    return SumPlan(start, pot, cutoff, target_tail, max_terms=max_terms, derivative=True, strict=False)


def descend(
    start: PeriodicForm,
    pot: Potential,
    grad_tol: float = 1e-9,
    max_iters: int = 500,
    initial_step: float = 1.0,
    cutoff: Optional[float] = None,
    target_tail: Optional[float] = None,
    max_terms: int = DEFAULT_MAX_TERMS,
    plan: Optional[SumPlan] = None,
) -> DescentTrace:
    """Gradient descent with Armijo backtracking along the exponential retraction.

    The first trial step of every line search is the Barzilai-Borwein step
    from the previous iteration (``initial_step`` on the first one) and is
    halved until the Armijo condition holds.  When the predicted decrease is
    below the rounding level of the energy, a step is accepted if it does not
    increase the energy beyond rounding and reduces the gradient norm.
    """
    if not grad_tol > 0 or max_iters < 0 or not initial_step > 0:
        raise ValueError("grad_tol and initial_step must be positive, max_iters nonnegative")
    plan = plan or _plan(start, pot, cutoff, target_tail, max_terms)
    tb = TangentBasis(start.dim, start.m)
    p = start
    e = plan.energy_at(p)
    if not math.isfinite(e):
        raise ValueError("energy is not finite at the start")
    g = _derivatives(p, pot, plan, 1).gradient
    iterates = [(e, float(np.linalg.norm(g)), 0.0)]
    step = initial_step
    it = 0
    converged = iterates[0][1] <= grad_tol
    while not converged and it < max_iters:
        gg = float(g @ g)
        a = step
        while True:
            if a < MIN_STEP:
                raise LineSearchStalled(
                    f"step fell below {MIN_STEP:g} at iteration {it} with gradient norm {math.sqrt(gg):.3e}"
                )
            try:
                trial = retract(p, tb.to_tangent(p, -a * g))
            except PerturbationTooLarge:
                a *= 0.5
                continue
            e_new = plan.energy_at(trial)
            # a decrease lost to rounding does not count as progress
            if e_new < e and e_new <= e - ARMIJO * a * gg:
                g_new = _derivatives(trial, pot, plan, 1).gradient
                break
            noise = 64 * np.finfo(float).eps * max(abs(e), 1e-300)
            if a * gg < noise and e_new <= e + noise:
                g_new = _derivatives(trial, pot, plan, 1).gradient
                if g_new @ g_new < gg:
                    break
            a *= 0.5
        # Barzilai-Borwein step from the coordinate change and gradient change;
        # coordinates at successive points are compared in the shared basis
        s_vec = -a * g
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 0 else 2 * a
        p, e, g = trial, e_new, g_new
        it += 1
        gn = float(np.linalg.norm(g))
        iterates.append((e, gn, a))
        converged = gn <= grad_tol
    return DescentTrace(iterates, p, converged, it, plan.cutoff, plan.tail_bound)


def random_unit_directions(basis: TangentBasis, samples: int, seed: int) -> np.ndarray:
    """Directions uniform on the unit sphere of the tangent metric."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, basis.size))
    return x / np.linalg.norm(x, axis=1)[:, None]


@dataclass
class SweepSummary:
    deltas: np.ndarray
    magnitude: float
    seed: int
    base_energy: float
    recovered: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    @property
    def min_delta(self) -> float:
        return float(np.min(self.deltas)) if len(self.deltas) else 0.0

    @property
    def max_delta(self) -> float:
        return float(np.max(self.deltas)) if len(self.deltas) else 0.0

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.deltas < 0))

    def to_json(self) -> dict:
        out = {
            "samples": int(len(self.deltas)),
            "magnitude": self.magnitude,
            "seed": self.seed,
            "base_energy": self.base_energy,
            "min_delta": self.min_delta,
            "max_delta": self.max_delta,
            "n_negative": self.n_negative,
            "deltas": [float(x) for x in self.deltas],
            "notes": list(self.notes),
        }
        if self.recovered is not None:
            out["max_recovery_relative_error"] = float(np.max(self.recovered)) if len(self.recovered) else 0.0
            out["recovery_relative_errors"] = [float(x) for x in self.recovered]
        return out


def perturbation_sweep(
    lat,
    m: int,
    pot: Potential,
    magnitude: float,
    samples: int,
    seed: int = 0,
    descend_after: bool = False,
    grad_tol: float = 1e-9,
    max_iters: int = 500,
    cutoff: Optional[float] = None,
    target_tail: Optional[float] = None,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> SweepSummary:
    """Energy change along ``samples`` random unit tangent directions scaled by ``magnitude``.

    With ``descend_after`` every perturbed form is also descended and the
    relative distance of the final energy to the base energy is recorded.
    Samples run sequentially in index order.
    """
    if magnitude < 0 or samples < 0:
        raise ValueError("magnitude and samples must be nonnegative")
    base = lat if isinstance(lat, PeriodicForm) else None
    if base is None:
        q = _as_quadform(lat)
        base = coset_decomposition(q, m, seed) if m > 1 else PeriodicForm(q)
    plan = _plan(base, pot, cutoff, target_tail, max_terms)
    tb = TangentBasis(base.dim, base.m)
    e0 = plan.energy_at(base)
    dirs = random_unit_directions(tb, samples, seed)
    deltas = np.zeros(samples)
    rec = np.zeros(samples) if descend_after else None
    for i, c in enumerate(dirs):
        p = retract(base, tb.to_tangent(base, c), magnitude)
        deltas[i] = plan.energy_at(p) - e0
        if descend_after:
            tr = descend(p, pot, grad_tol, max_iters, plan=plan)
            rec[i] = abs(tr.final_energy - e0) / abs(e0)
    summary = SweepSummary(deltas, float(magnitude), int(seed), e0, rec)
    summary.notes.append(f"magnitude {magnitude:g} is a user choice, not a derived basin size")
    return summary
