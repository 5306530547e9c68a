"""Criticality and local-optimality certificates for lattices.

Every certificate lists the hypotheses it checked (with the shell bound up
to which they were verified), the thresholds it used, and numerical
witnesses.  Hypotheses about all shells can only be verified up to a bound;
the bound is part of the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import mpmath
import numpy as np

from .calculus import (
    f_and_g,
    gradient_general,
    hessian_at_lattice,
    shell_counts,
    split_cutoff,
)
from .designs import check_2design, check_4design
from .energy import DEFAULT_MAX_TERMS, Potential, epstein_zeta
from .enumeration import _as_quadform, coset_decomposition, enumerate_shells, min_norm
from .errors import DesignHypothesisFailed, InternalInconsistency, PreconditionFailed
from .forms import PeriodicForm, QuadForm

MARGIN = 1e-10
CRITICAL_TOL = 1e-10
GRADIENT_BUG_TOL = 1e-6

CERTIFIED = "Certified"
BY_THRESHOLD = "Certified-by-threshold"
NUMERIC = "Certified-numeric"
REFUTED = "Refuted"
INCONCLUSIVE = "Inconclusive"


@dataclass
class Hypothesis:
    name: str
    verified_up_to: float
    residual: float
    holds: bool

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "verified_up_to": self.verified_up_to,
            "residual": self.residual,
            "holds": self.holds,
        }


@dataclass
class Certificate:
    lattice_id: str
    claim: str
    verdict: str
    hypotheses: list = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict in (CERTIFIED, BY_THRESHOLD, NUMERIC)

    def to_json(self) -> dict:
        return {
            "lattice_id": self.lattice_id,
            "claim": self.claim,
            "verdict": self.verdict,
            "hypotheses": [h.to_json() for h in self.hypotheses],
            "thresholds": {k: _num(v) for k, v in self.thresholds.items()},
            "witnesses": {k: _num(v) for k, v in self.witnesses.items()},
            "notes": list(self.notes),
        }


def _num(v):
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    if isinstance(v, (bool, str)) or v is None:
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _design_rows(q: QuadForm, t: int, bound: float) -> list[Hypothesis]:
    worst, ok = 0.0, True
    check = check_2design if t == 2 else check_4design
    for s in enumerate_shells(q, bound):
        rep = check(s, q)
        worst = max(worst, rep.max_residual)
        ok = ok and rep.is_design
    return [Hypothesis(f"all shells are {t}-designs", float(bound), worst, ok)]


def _default_design_bound(q: QuadForm) -> float:
    return 4.0 * min_norm(q)


def _form(q: QuadForm, m: int, seed: int) -> PeriodicForm:
    return coset_decomposition(q, m, seed) if m > 1 else PeriodicForm(q)


def certify_critical(
    lat,
    pot: Potential,
    m: int = 1,
    cutoff: Optional[float] = None,
    seed: int = 0,
    lattice_id: str = "form",
) -> Certificate:
    """Check that the lattice is a critical point of the energy for every representation with m cosets.

    The gradient is summed over exactly the shells whose 2-design property
    was verified, so Certified means: design hypothesis up to ``cutoff`` and
    a vanishing gradient of the corresponding truncated energy.
    """
    q = _as_quadform(lat)
    bound = cutoff if cutoff is not None else _default_design_bound(q)
    rows = _design_rows(q, 2, bound)
    p = _form(q, m, seed)
    gh = gradient_general(p, pot, cutoff=bound)
    gnorm = gh.gradient_norm
    wit = {"gradient_norm": gnorm, "gradient_cutoff_norm_sq": bound, "omitted_shell_bound": gh.tail_bound}
    claim = f"Critical({pot.label}, m={m})"
    if rows[0].holds:
        if gnorm <= CRITICAL_TOL:
            verdict = CERTIFIED
        elif gnorm > GRADIENT_BUG_TOL:
            raise InternalInconsistency(
                f"shells are 2-designs up to {bound} but the gradient norm is {gnorm:.3g}"
            )
        else:
            verdict = INCONCLUSIVE
    else:
        verdict = REFUTED if gnorm > CRITICAL_TOL else INCONCLUSIVE
    return Certificate(lattice_id, claim, verdict, rows, {"critical_tol": CRITICAL_TOL}, wit)


def _numeric_tier(gh) -> tuple[float, float]:
    w = np.linalg.eigvalsh(gh.hessian)
    rounding = 64 * np.finfo(float).eps * gh.basis.size * float(np.max(np.abs(gh.hessian)))
    return float(w[0]), gh.matrix_error_bound() + rounding


def _side(lam: float, err: float) -> str:
    if lam - err > MARGIN:
        return "positive"
    if lam + err < -MARGIN:
        return "negative"
    return "undecided"


def certify_ps(
    lat,
    s: float,
    m: int = 1,
    cutoff: Optional[float] = None,
    seed: int = 0,
    lattice_id: str = "form",
    hessian_cutoff: Optional[float] = None,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> Certificate:
    """Local optimality for r^-s, s > d/2, from 4-design shells and the dense Hessian."""
    q = _as_quadform(lat)
    d = q.dim
    if not s > d / 2:
        raise PreconditionFailed(f"requires s > d/2 = {d / 2}, got s = {s}")
    bound = cutoff if cutoff is not None else _default_design_bound(q)
    rows = _design_rows(q, 2, bound) + _design_rows(q, 4, bound)
    if not rows[1].holds:
        raise DesignHypothesisFailed(f"shells up to {bound} are not all 4-designs")
    zeta = epstein_zeta(q, s, target_tail=1e-13)
    zeta1 = epstein_zeta(q, s + 1, target_tail=1e-13)
    h_coef = s * (s - d / 2) / (d * (d + 2)) * zeta.value
    t_coef = (2 * (s + 1) / d - 1) * zeta1.value
    pot = Potential.power(s)
    p = _form(q, m, seed)
    gh = _hessian(p, pot, hessian_cutoff, max_terms)
    lam, err = _numeric_tier(gh)
    wh = np.linalg.eigvalsh(gh.h_block)
    # the closed form is the Taylor coefficient: second derivatives are twice it
    h_match = float(np.max(np.abs(wh - 2 * h_coef)) / (2 * h_coef))
    rows.append(Hypothesis("dense H-block equals closed form", gh.cutoff_norm_sq, h_match, h_match <= 1e-8))
    wit = {
        "h_coefficient": h_coef,
        "t_coefficient": t_coef,
        "zeta": zeta.value,
        "min_eigenvalue": lam,
        "eigenvalue_error_bound": err,
        "h_block_relative_mismatch": h_match,
        "hessian_cutoff_norm_sq": gh.cutoff_norm_sq,
    }
    if p.m > 1:
        wit["t_block_min_eigenvalue"] = float(np.linalg.eigvalsh(gh.t_block)[0])
    side = _side(lam, err)
    if all(r.holds for r in rows) and h_coef > MARGIN and t_coef > MARGIN and side == "positive":
        verdict = CERTIFIED
    elif side == "negative":
        verdict = REFUTED
    else:
        verdict = INCONCLUSIVE
    return Certificate(lattice_id, f"LocalMin_ps(s={s}, m={m})", verdict, rows,
                       {"s_min_exclusive": d / 2}, wit)


def _hessian(p, pot, cutoff, max_terms):
    from .energy import SumPlan
    from .calculus import _derivatives

    plan = SumPlan(p, pot, cutoff, None, max_terms=max_terms, derivative=True, strict=False)
    return _derivatives(p, pot, plan, 2)


def certify_fc(
    lat,
    c: float,
    m: int = 1,
    cutoff: Optional[float] = None,
    seed: int = 0,
    lattice_id: str = "form",
    hessian_cutoff: Optional[float] = None,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> Certificate:
    """Local optimality for exp(-c r): threshold tier, then dense-Hessian tier."""
    q = _as_quadform(lat)
    d = q.dim
    if not c > 0:
        raise ValueError("c must be positive")
    mu = min_norm(q)
    thresholds = {"c_threshold_h": (d + 2) / (2 * mu), "c_threshold_t": d / (2 * mu)}
    bound = cutoff if cutoff is not None else _default_design_bound(q)
    pot = Potential.exp(c)
    crit = certify_critical(q, pot, m, bound, seed, lattice_id)
    if crit.verdict != CERTIFIED:
        cert = Certificate(lattice_id, f"LocalMin_fc(c={c}, m={m})", crit.verdict, crit.hypotheses,
                           thresholds, dict(crit.witnesses))
        cert.notes.append("not certified critical; local optimality not examined")
        if crit.verdict == REFUTED:
            cert.verdict = REFUTED
        return cert
    rows = crit.hypotheses + _design_rows(q, 4, bound)
    if not rows[-1].holds:
        raise DesignHypothesisFailed(f"shells up to {bound} are not all 4-designs")
    p = _form(q, m, seed)
    gh = _hessian(p, pot, hessian_cutoff, max_terms)
    lam, err = _numeric_tier(gh)
    side = _side(lam, err)
    wit = {
        "min_eigenvalue": lam,
        "eigenvalue_error_bound": err,
        "hessian_cutoff_norm_sq": gh.cutoff_norm_sq,
        "h_block_min_eigenvalue": float(np.linalg.eigvalsh(gh.h_block)[0]),
    }
    if p.m > 1:
        wit["t_block_min_eigenvalue"] = float(np.linalg.eigvalsh(gh.t_block)[0])
    above = c > thresholds["c_threshold_h"] and c > thresholds["c_threshold_t"]
    if above:
        if side == "negative":
            raise InternalInconsistency("threshold tier certifies but the dense Hessian has a negative eigenvalue")
        verdict = BY_THRESHOLD
    elif side == "positive":
        verdict = NUMERIC
    elif side == "negative":
        verdict = REFUTED
    else:
        verdict = INCONCLUSIVE
    cert = Certificate(lattice_id, f"LocalMin_fc(c={c}, m={m})", verdict, rows, thresholds, wit)
    if above and side != "positive":
        cert.notes.append("numeric tier undecided within its error bound")
    return cert


def universal_scan(
    lat,
    y_grid: Sequence[float],
    cutoff: Optional[float] = None,
    lattice_id: str = "form",
) -> Certificate:
    """Scan F and G over a grid of y = c/pi.

    Certified means: on the grid, G > 0 and F > 0 beyond their error
    bounds and F decreases from one grid point to the next.  It is a
    statement about the grid only, not a proof for every y.
    """
    q = _as_quadform(lat)
    d = q.dim
    ys = sorted(float(y) for y in y_grid)
    if not ys or ys[0] <= 0:
        raise ValueError("y grid must be nonempty and positive")
    bound = cutoff if cutoff is not None else _default_design_bound(q)
    rows = _design_rows(q, 4, bound)
    if not rows[0].holds:
        raise DesignHypothesisFailed(f"shells up to {bound} are not all 4-designs")
    shell_bound, tail = split_cutoff(q, ys[0])
    counts = shell_counts(q, shell_bound)
    fs, gs = [], []
    for y in ys:
        f, g = f_and_g(counts, y, d)
        fs.append(f)
        gs.append(g)
    # error of every value: omitted shells plus extended-precision rounding
    err = tail + 1e-45
    g_ok = all(g > err for g in gs)
    f_ok = all(f > err for f in fs)
    dec = all(fs[i] - fs[i + 1] > 2 * err for i in range(len(fs) - 1))
    ig = int(np.argmin([float(g) for g in gs]))
    i_f = int(np.argmin([float(f) for f in fs]))
    mu = min_norm(q)
    wit = {
        "min_G": float(gs[ig]),
        "min_G_at_y": ys[ig],
        "min_F": float(fs[i_f]),
        "min_F_at_y": ys[i_f],
        "F_at_y_min": float(fs[0]),
        "F_at_y_max": float(fs[-1]),
        "value_error_bound": err,
        "shells_summed_up_to": shell_bound,
        "F_strictly_decreasing_on_grid": dec,
    }
    thresholds = {
        "y_F_positive_beyond": d / (2 * math.pi * mu),
        "y_G_positive_beyond": (d / 2 + 1) / (math.pi * mu),
        "y_min": ys[0],
        "y_max": ys[-1],
    }
    if g_ok and f_ok and dec:
        verdict = CERTIFIED
    elif any(g < -err for g in gs) or any(f < -err for f in fs):
        verdict = REFUTED
    else:
        verdict = INCONCLUSIVE
    cert = Certificate(lattice_id, f"UniversalScan(y in [{ys[0]:g}, {ys[-1]:g}], {len(ys)} points)",
                       verdict, rows, thresholds, wit)
    cert.notes.append("grid-relative: supported on the scanned grid only, not a proof for all y")
    return cert
