"""Potentials and energies of periodic forms.

Energies are coset sums (1/m) sum_{i,j} sum_{0 != v in u_i - u_j + Z^d} f(Q[v]).
Inverse powers are evaluated with an Ewald split: the real-space kernel
r^-s Q(s, beta r) is summed directly, the smooth part contributes a closed
form constant plus a reciprocal remainder that is bounded, not summed.
Every value carries a rigorous bound on what was left out.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gamma as gamma_fn, gammaincc

from .enumeration import (
    _Coset,
    _as_quadform,
    detect_lattice,
    estimate_count,
    iter_blocks,
    lattice_vectors,
    lattice_gram_of,
    min_norm,
    theta_counts,
)
from .errors import CutoffOverflow, DivergentSum, DomainError, WindowTooSmall
from .forms import PeriodicForm, QuadForm

DEFAULT_MAX_TERMS = 20_000_000
DEFAULT_RELATIVE_TAIL = 1e-12


@dataclass(frozen=True)
class Potential:
    """f(r) = exp(-c r) (kind "exp") or r^-s (kind "pow"); r is a squared distance."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("exp", "pow"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not (self.param > 0 and math.isfinite(self.param)):
            raise ValueError("potential parameter must be a positive finite number")

    @classmethod
    def exp(cls, c: float) -> "Potential":
        return cls("exp", float(c))

    @classmethod
    def power(cls, s: float) -> "Potential":
        return cls("pow", float(s))

    @classmethod
    def parse(cls, text: str) -> "Potential":
        """Read "exp:c=3.14" or "pow:s=4"."""
        m = re.fullmatch(r"\s*(exp|pow)\s*:\s*([cs])\s*=\s*([^\s]+)\s*", text)
        if not m or (m.group(1) == "exp") != (m.group(2) == "c"):
            raise ValueError(f"cannot parse potential {text!r}; use exp:c=<c> or pow:s=<s>")
        return cls(m.group(1), float(m.group(3)))

    @property
    def label(self) -> str:
        return f"exp:c={self.param!r}" if self.kind == "exp" else f"pow:s={self.param!r}"

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-self.param * r) if self.kind == "exp" else r ** (-self.param)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "exp":
            return -self.param * np.exp(-self.param * r)
        return -self.param * r ** (-self.param - 1)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "exp":
            return self.param ** 2 * np.exp(-self.param * r)
        s = self.param
        return s * (s + 1) * r ** (-s - 2)

    def check_convergent(self, d: int) -> None:
        if self.kind == "pow" and not self.param > d / 2:
            raise DivergentSum(f"r^-s energy diverges in dimension {d} unless s > {d / 2}")


def eval_potential(pot: Potential, r: float) -> float:
    if not r > 0:
        raise DomainError("potentials are evaluated at positive squared distances only")
    return float(pot.f(r))


# ---------------------------------------------------------------------------
# summation kernels


class Kernel:
    """Summand g(r) with first and second derivatives, plus the constant part.

    For "exp" g = f.  For "pow" with splitting parameter beta,
    g(r) = r^-s Q(s, beta r) and the energy gains
    m C0 - beta^s / (s Gamma(s)), C0 = pi^(d/2) beta^(s - d/2) / ((s - d/2) Gamma(s) sqrt(det Q)).
    """

    def __init__(self, pot: Potential, beta: Optional[float] = None):
        self.pot = pot
        self.beta = beta if pot.kind == "pow" else None

    def g(self, r):
        if self.beta is None:
            return self.pot.f(r)
        s = self.pot.param
        r = np.asarray(r, dtype=float)
        return r ** (-s) * gammaincc(s, self.beta * r)

    def g1(self, r):
        if self.beta is None:
            return self.pot.d1(r)
        s = self.pot.param
        r = np.asarray(r, dtype=float)
        return -s * r ** (-s - 1) * gammaincc(s + 1, self.beta * r)

    def g2(self, r):
        if self.beta is None:
            return self.pot.d2(r)
        s = self.pot.param
        r = np.asarray(r, dtype=float)
        return s * (s + 1) * r ** (-s - 2) * gammaincc(s + 2, self.beta * r)

    def smooth_pair_constant(self, q: QuadForm) -> float:
        if self.beta is None:
            return 0.0
        s, d = self.pot.param, q.dim
        return math.pi ** (d / 2) * self.beta ** (s - d / 2) / ((s - d / 2) * gamma_fn(s) * math.sqrt(q.det))

    def constant(self, q: QuadForm, m: int) -> float:
        if self.beta is None:
            return 0.0
        s = self.pot.param
        return m * self.smooth_pair_constant(q) - self.beta ** s / (s * gamma_fn(s))

    def reciprocal_bound(self, q: QuadForm, m: int, dual_gram: QuadForm, dual_min: float,
                         derivative: bool = False) -> float:
        """Bound on the omitted nonzero reciprocal terms.

        With ``derivative`` each term e^-y (y = pi^2 |k|^2 / t) is weighted by
        (1 + y)^2 (1 + 2 sqrt(beta y))^2, which dominates the factors produced
        by up to two derivatives in the Gram or translation directions.
        """
        if self.beta is None:
            return 0.0
        x = math.pi ** 2 / self.beta
        beta = self.beta
        if derivative:
            def phi(r):
                y = x * r
                return (1 + y) ** 2 * (1 + 2 * np.sqrt(beta * y)) ** 2 * np.exp(-y)
        else:
            def phi(r):
                return np.exp(-x * r)
        theta = dual_theta_bound(phi, dual_gram, dual_min)
        return m * self.smooth_pair_constant(q) * theta

    def derivative_weight(self, r):
        """Decreasing envelope (past its peak) of |g1| r + |g2| r^2, the size of derivative summands."""
        return np.abs(self.g1(r)) * r + np.abs(self.g2(r)) * r * r

    def derivative_peak(self) -> float:
        if self.beta is None and self.pot.kind == "exp":
            return 2.0 / self.pot.param
        return 0.0


def tail_sum_bound(phi: Callable, a_sq: float, rho: float, d: int, mult: float = 1.0) -> float:
    """Upper bound for sum of phi(|x|^2) over points with |x|^2 > a_sq.

    Valid for phi decreasing on [a_sq, inf) and point sets with minimal
    distance >= 2 rho: balls of radius rho around points with a < |x| <= r
    are disjoint and fit in the shell between radii a - rho and r + rho, so
    there are at most ((r + rho)^d - (a - rho)_+^d) / rho^d of them.  The
    sum is the Stieltjes integral of phi against that count.  Scaled by
    ``mult`` copies of such a set.
    """
    a = math.sqrt(max(a_sq, 0.0))
    inner = max(a - rho, 0.0) ** d

    def integrand(r):
        return d * (r + rho) ** (d - 1) * float(phi(r * r))

    head = ((a + rho) ** d - inner) * float(phi(a * a)) if a > 0 else 0.0
    width = max(rho, 1e-3 * max(a, 1.0))
    edges = [a, a + width, a + 4 * width, a + 16 * width, a + 64 * width]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, err = quad(integrand, lo, hi, limit=200, epsrel=1e-10, epsabs=0.0)
            total += val + abs(err)
        val, err = quad(integrand, edges[-1], np.inf, limit=200, epsrel=1e-10, epsabs=0.0)
        total += val + abs(err)
    return mult * (head + total) / rho ** d * (1 + 1e-6)


def dual_theta_bound(phi: Callable, dual_gram: QuadForm, dual_min: float, shells: float = 4.0) -> float:
    """Bound on sum of phi(|k|^2) over nonzero dual vectors: exact up to
    ``shells`` times the dual minimum, packing bound beyond."""
    bound = shells * dual_min
    _, norms = lattice_vectors(dual_gram, bound)
    head = math.fsum(np.asarray(phi(norms), dtype=float))
    return head + tail_sum_bound(phi, bound, math.sqrt(dual_min) / 2, dual_gram.dim)


# ---------------------------------------------------------------------------
# summation plan shared by energies and derivatives


@dataclass
class EnergyValue:
    value: float
    tail_bound: float
    cutoff_norm_sq: float
    terms_used: int
    method: str = "vectors"

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "tail_bound": self.tail_bound,
            "cutoff_norm_sq": self.cutoff_norm_sq,
            "terms_used": self.terms_used,
            "method": self.method,
        }


def smallest_difference_norm(p: PeriodicForm) -> float:
    """Smallest squared distance between two distinct points of the periodic set."""
    best = min_norm(p.q)
    for i in range(p.m):
        for j in range(p.m):
            if i == j:
                continue
            off = p.translations[i] - p.translations[j]
            _, _, norms, _ = _Coset(p.q, off).enumerate(best)
            if len(norms):
                best = min(best, float(norms[0]))
    return best


class SumPlan:
    """Kernel, cutoff and error budget fixed at a base form.

    ``cutoff`` is a squared-norm bound.  When omitted it is the smallest one
    whose bound on the omitted terms (derivative-weighted if ``derivative``)
    is below ``target_tail``; ``target_tail`` defaults to 1e-12 times the
    contribution of the nearest neighbour.
    """

    def __init__(
        self,
        base: PeriodicForm,
        pot: Potential,
        cutoff: Optional[float] = None,
        target_tail: Optional[float] = None,
        max_terms: int = DEFAULT_MAX_TERMS,
        derivative: bool = False,
        strict: bool = True,
        cache_limit: int = 2_000_000,
    ):
        pot.check_convergent(base.dim)
        self.base = base
        self.pot = pot
        self.m = base.m
        self.derivative = derivative
        self.max_terms = max_terms
        table = detect_lattice(base)
        self.is_lattice = bool(table)
        self.table = table if self.is_lattice else None
        self.lattice_q = lattice_gram_of(base) if self.is_lattice else None
        # the summed point set: the lattice itself (m = 1) or all cosets
        # the summed multiset is the lattice itself when the set is one,
        # else m copies of the coset lattice averaged over m base points
        self.sum_q = self.lattice_q if self.is_lattice else base.q
        self.sum_m = 1 if self.is_lattice else base.m
        mu = smallest_difference_norm(base)
        # (rho, copies) packings usable for tail counting
        self.packings = [(math.sqrt(min_norm(self.sum_q)) / 2, self.sum_m)]
        if not self.is_lattice:
            self.packings.append((math.sqrt(mu) / 2, 1))
        if pot.kind == "pow":
            self.dual_gram = QuadForm((self.lattice_q if self.is_lattice else base.q).inverse)
            self.dual_min = min_norm(self.dual_gram)
        else:
            self.dual_gram = self.dual_min = None
        scale = float(pot.f(mu))
        if derivative:
            scale = float(np.abs(pot.d1(mu)) * mu + np.abs(pot.d2(mu)) * mu * mu)
        self.target = target_tail if target_tail is not None else DEFAULT_RELATIVE_TAIL * scale
        if cutoff is None:
            cutoff = self._choose_cutoff(strict)
        self.cutoff = float(cutoff)
        self.kernel = self._kernel_for(self.cutoff)
        self.tail_bound = self._bound(self.cutoff)
        self.cache_limit = cache_limit
        self._cache = None

    # -- cutoff selection
    def _kernel_for(self, a: float) -> Kernel:
        if self.pot.kind == "pow":
            return Kernel(self.pot, math.pi * math.sqrt(self.dual_min / a))
        return Kernel(self.pot)

    def _bound(self, a: float) -> float:
        k = self._kernel_for(a)
        d = self.base.dim
        if self.derivative:
            a_eff = max(a, k.derivative_peak())
            real = min(tail_sum_bound(k.derivative_weight, a_eff, r, d, c) for r, c in self.packings)
            if a_eff > a:
                real = math.inf
        else:
            real = min(tail_sum_bound(k.g, a, r, d, c) for r, c in self.packings)
        recip = 0.0
        if k.beta is not None:
            recip = k.reciprocal_bound(self.sum_q, self.sum_m, self.dual_gram, self.dual_min, self.derivative)
        return real + recip

    def _count(self, a: float) -> float:
        return estimate_count(self.sum_q, a, self.sum_m)

    def _choose_cutoff(self, strict: bool) -> float:
        lo = max(min_norm(self.sum_q), 1e-300)
        if self.derivative and self.pot.kind == "exp":
            lo = max(lo, 2.0 / self.pot.param)
        if self._bound(lo) <= self.target:
            return lo
        hi = 2 * lo
        while self._bound(hi) > self.target:
            if self._count(hi) > self.max_terms:
                if strict:
                    raise CutoffOverflow(
                        f"tail target {self.target:.3g} needs more than {self.max_terms} terms"
                    )
                return self._budget_cutoff(lo, hi)
            lo, hi = hi, 2 * hi
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if self._bound(mid) <= self.target:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-3 * hi:
                break
        if strict and self._count(hi) > self.max_terms:
            raise CutoffOverflow(f"tail target {self.target:.3g} needs more than {self.max_terms} terms")
        return hi

    def _budget_cutoff(self, lo: float, hi: float) -> float:
        while self._count(hi) > self.max_terms and hi > lo * 1.0001:
            hi = 0.5 * (lo + hi) if self._count(0.5 * (lo + hi)) <= self.max_terms else hi * 0.9
            if hi <= lo:
                return lo
        return hi

    # -- vector data
    def pair_classes(self) -> list[tuple[np.ndarray, list[tuple[int, int]]]]:
        """Ordered pairs (a, b) grouped by the class of u_a - u_b mod Z^d."""
        groups: list[tuple[np.ndarray, list[tuple[int, int]]]] = []
        u = self.base.translations
        for a in range(self.m):
            for b in range(self.m):
                off = u[a] - u[b]
                for rep, members in groups:
                    dlt = off - rep
                    if np.max(np.abs(dlt - np.round(dlt))) <= 1e-9:
                        members.append((a, b))
                        break
                else:
                    groups.append((off, [(a, b)]))
        return groups

    def chunks(self):
        """Yield (pairs, v) with v the base lattice coordinates of one block of
        difference vectors shared by every pair in ``pairs``; pair (a, b) sees
        v + (u_a - u_b) - rep as the same set."""
        if self._cache is not None:
            yield from self._cache
            return
        groups = self.pair_classes()
        total = self._count(self.cutoff) * len(groups) / max(self.m * self.m, 1) * self.m
        keep = total <= self.cache_limit
        out = []
        for rep, members in groups:
            for _, coords, _ in iter_blocks(self.base.q, rep, self.cutoff):
                item = (members, coords)
                if keep:
                    out.append(item)
                yield item
        if keep:
            self._cache = out

    def terms_used(self) -> int:
        return int(sum(len(c) * len(pairs) for pairs, c in self.chunks()))

    def shifts_at(self, p: PeriodicForm) -> np.ndarray:
        """Unwrapped translation changes from the base form to ``p``."""
        du = p.translations - self.base.translations
        return du - np.round(du)

    def energy_at(self, p: PeriodicForm) -> float:
        du = self.shifts_at(p)
        parts = []
        for pairs, v in self.chunks():
            for a, b in pairs:
                r = p.q.norm_sq(v + (du[a] - du[b]))
                parts.append(math.fsum(self.kernel.g(r)))
        return math.fsum(parts) / self.m + self.kernel.constant(p.q, self.m)


def _lattice_shell_energy(plan: SumPlan) -> EnergyValue:
    counts = theta_counts(plan.lattice_q, plan.cutoff)
    alphas = np.array([float(a) for a, _ in counts])
    mult = np.array([n for _, n in counts], dtype=float)
    k = plan.kernel
    value = math.fsum(mult * k.g(alphas)) + k.constant(plan.lattice_q, 1)
    return EnergyValue(value, plan.tail_bound, plan.cutoff, int(mult.sum()), "shells")


def energy(
    p: PeriodicForm,
    pot: Potential,
    target_tail: Optional[float] = None,
    cutoff_norm_sq: Optional[float] = None,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> EnergyValue:
    """f-energy with a rigorous bound on the truncation error.

    Exact rational lattices are summed shell by shell from theta counts;
    everything else by explicit coset-difference vectors.
    """
    if not isinstance(p, PeriodicForm):
        p = PeriodicForm(_as_quadform(p))
    if target_tail is not None and not target_tail > 0:
        raise ValueError("target_tail must be positive")
    use_shells = p.is_exact or (p.m == 1 and p.q.is_exact)
    if use_shells:
        plan = SumPlan(p, pot, cutoff_norm_sq, target_tail, max_terms=10**12)
        if plan.is_lattice:
            try:
                return _lattice_shell_energy(plan)
            except CutoffOverflow:
                pass
    plan = SumPlan(p, pot, cutoff_norm_sq, target_tail, max_terms=max_terms)
    value = plan.energy_at(p)
    return EnergyValue(value, plan.tail_bound, plan.cutoff, plan.terms_used(), "vectors")


def epstein_zeta(q, s: float, target_tail: Optional[float] = None, **kw) -> EnergyValue:
    """Sum of |x|^-2s over nonzero lattice vectors."""
    return energy(PeriodicForm(_as_quadform(q)), Potential.power(s), target_tail, **kw)


def theta_minus_one(q, c: float, target_tail: Optional[float] = None, **kw) -> EnergyValue:
    """Sum of exp(-c |x|^2) over nonzero lattice vectors."""
    return energy(PeriodicForm(_as_quadform(q)), Potential.exp(c), target_tail, **kw)


def windowed_energy(p: PeriodicForm, radius: float, pot: Potential, block: int = 256) -> float:
    """(1/|W|) sum over ordered pairs x != y in W of f(|x - y|^2), W the points of norm <= radius."""
    if not isinstance(p, PeriodicForm):
        p = PeriodicForm(_as_quadform(p))
    pts = []
    for i in range(p.m):
        _, coords, _, _ = _Coset(p.q, p.translations[i]).enumerate(radius * radius, exclude_zero=False)
        pts.append(coords)
    x = np.concatenate(pts) @ p.q.factor.T
    n = x.shape[0]
    if n < 2:
        raise WindowTooSmall(f"window of radius {radius} holds {n} point(s)")
    total = 0.0
    for s in range(0, n, block):
        blk = x[s:s + block]
        r = np.sum((blk[:, None, :] - x[None, :, :]) ** 2, axis=-1)
        idx = np.arange(blk.shape[0])
        r[idx, s + idx] = np.inf
        total += math.fsum(pot.f(r).ravel())
    return total / n
