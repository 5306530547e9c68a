"""Gradient and Hessian of the energy in tangent coordinates, the F/G split, and a finite-difference oracle.

Coordinates: the Gram part moves as Q(H) = A^t exp(H) A with H traceless
symmetric in the orthonormal basis of :class:`TangentBasis`, translations
as u_i + A^-1 tau_i with tau Euclidean and tau_1 = 0.  In these coordinates
the invariant metric is the standard dot product, and the expansion of a
squared distance |x + tau_a - tau_b|^2 under (H, tau) is

    r = |x|^2 + H[x] + 2 x.D + |D|^2 + 2 x^t H D + H^2[x] / 2 + ...,  D = tau_a - tau_b.

Hessians are matrices of second derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import mpmath
import numpy as np

from .designs import check_4design
from .enumeration import _as_quadform, enumerate_shells, min_norm, theta_counts
from .energy import Potential, SumPlan, tail_sum_bound
from .errors import CutoffOverflow, DesignHypothesisFailed, NotALatticeError
from .forms import PeriodicForm, QuadForm, TangentBasis, retract


@dataclass
class GradHess:
    """Gradient (and optionally Hessian) in the coordinates of ``basis``."""

    gradient: np.ndarray
    hessian: Optional[np.ndarray]
    basis: TangentBasis
    cutoff_norm_sq: float = math.nan
    tail_bound: float = math.nan
    pooled_tt: Optional[np.ndarray] = None

    @property
    def gradient_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    @property
    def n_h(self) -> int:
        return self.basis.n_h

    @property
    def h_block(self) -> np.ndarray:
        return self.hessian[: self.n_h, : self.n_h]

    @property
    def t_block(self) -> np.ndarray:
        return self.hessian[self.n_h:, self.n_h:]

    @property
    def cross_block(self) -> np.ndarray:
        return self.hessian[: self.n_h, self.n_h:]

    def gradient_tangent(self, base: PeriodicForm):
        return self.basis.to_tangent(base, self.gradient)

    def matrix_error_bound(self) -> float:
        """Spectral-norm bound for the truncation error of the Hessian.

        Each omitted entry is at most 8 times the derivative tail bound
        (sign sums over pairs and the r^(1/2) vs r factors for r >= 1);
        the spectral norm is at most n times the largest entry.
        """
        return 8.0 * self.basis.size * self.tail_bound

    def eigen_summary(self) -> dict:
        w = np.linalg.eigvalsh(self.hessian)
        out = {"min": float(w[0]), "max": float(w[-1])}
        if self.n_h:
            wh = np.linalg.eigvalsh(self.h_block)
            out["h_min"], out["h_max"] = float(wh[0]), float(wh[-1])
        if self.basis.m > 1:
            wt = np.linalg.eigvalsh(self.t_block)
            out["t_min"], out["t_max"] = float(wt[0]), float(wt[-1])
        return out

    def to_json(self) -> dict:
        out = {
            "basis": self.basis.description(),
            "gradient": [float(x) for x in self.gradient],
            "gradient_norm": self.gradient_norm,
            "cutoff_norm_sq": self.cutoff_norm_sq,
            "tail_bound": self.tail_bound,
        }
        if self.hessian is not None:
            out["hessian"] = [[float(x) for x in row] for row in self.hessian]
            out["eigenvalues"] = self.eigen_summary()
            out["cross_block_max"] = float(np.max(np.abs(self.cross_block))) if self.basis.m > 1 else 0.0
        return out


def _basis_stack(tb: TangentBasis) -> np.ndarray:
    return np.array(tb.h_basis) if tb.n_h else np.zeros((0, tb.d, tb.d))


def _derivatives(p: PeriodicForm, pot: Potential, plan: SumPlan, order: int) -> GradHess:
    """Accumulate per-class moments over the plan's difference vectors at ``p``."""
    d, m = p.dim, p.m
    tb = TangentBasis(d, m)
    bs = _basis_stack(tb)
    nh = tb.n_h
    bflat = bs.reshape(nh, d * d)
    a = p.q.factor
    k = plan.kernel
    merged: dict = {}
    du = plan.shifts_at(p)
    for pairs, v in plan.chunks():
        # pairs of one class share vectors only while their shifts agree
        by_shift: dict = {}
        for pr in pairs:
            sh = du[pr[0]] - du[pr[1]]
            by_shift.setdefault(tuple(sh), (sh, []))[1].append(pr)
        for sh, sub in by_shift.values():
            _accumulate(merged, sub, v + sh if np.any(sh) else v, a, k, bflat, d, order)
    merged = {key: {name: _pairwise(vals) for name, vals in bucket.items()} for key, bucket in merged.items()}

    def sgn(i, pair):
        return (pair[0] == i) - (pair[1] == i)

    grad = np.zeros(tb.size)
    hess = np.zeros((tb.size, tb.size)) if order >= 2 else None
    for key, mom in merged.items():
        pairs = list(key)
        n_pairs = len(pairs)
        m1 = mom["M1"]
        grad[:nh] += n_pairs * np.einsum("pij,ij->p", bs, m1)
        for i in range(1, m):
            w = sum(sgn(i, pr) for pr in pairs)
            if w:
                grad[nh + (i - 1) * d: nh + i * d] += 2.0 * w * mom["S1"]
        if order < 2:
            continue
        cm = np.einsum("qij,jk->qik", bs, m1)
        hh = mom["PP"] + np.einsum("pij,qji->pq", bs, cm)
        hess[:nh, :nh] += n_pairs * hh
        ht = 2.0 * mom["PX"] + 2.0 * np.einsum("pij,j->pi", bs, mom["S1"])
        tt = 4.0 * mom["M2"] + 2.0 * float(mom["s1"]) * np.eye(d)
        for i in range(1, m):
            si = sum(sgn(i, pr) for pr in pairs)
            blk_i = slice(nh + (i - 1) * d, nh + i * d)
            if si:
                hess[:nh, blk_i] += si * ht
            for j in range(1, m):
                sij = sum(sgn(i, pr) * sgn(j, pr) for pr in pairs)
                if sij:
                    hess[blk_i, nh + (j - 1) * d: nh + j * d] += sij * tt
    grad /= m
    if hess is not None:
        hess /= m
        hess[nh:, :nh] = hess[:nh, nh:].T
        hess = 0.5 * (hess + hess.T)
    return GradHess(grad, hess, tb, plan.cutoff, plan.tail_bound)


def _accumulate(merged: dict, pairs, v, a, k, bflat, d: int, order: int) -> None:
    x = v @ a.T
    r = np.einsum("ni,ni->n", x, x)
    f1 = k.g1(r)
    parts = {"M1": _moment(f1, x, x), "S1": _moment(f1, x)}
    if order >= 2:
        f2 = k.g2(r)
        pp = np.einsum("ni,nj->nij", x, x).reshape(len(r), d * d) @ bflat.T
        parts["PP"] = _moment(f2, pp, pp)
        parts["PX"] = _moment(f2, pp, x)
        parts["M2"] = _moment(f2, x, x)
        parts["s1"] = _moment(f1)
    key = tuple(pairs)
    bucket = merged.setdefault(key, {name: [] for name in parts})
    for name, val in parts.items():
        bucket[name].append(val)


def _pairwise(blocks) -> np.ndarray:
    """Sum equally shaped arrays with numpy's pairwise reduction."""
    st = np.stack([np.asarray(b, dtype=float) for b in blocks])
    return np.ascontiguousarray(np.moveaxis(st, 0, -1)).sum(axis=-1)


def _moment(w, a=None, b=None, block: int = 1024) -> np.ndarray:
    """sum_n w_n a_n (x) b_n, accumulated blockwise and reduced pairwise."""
    n = len(w)
    out = []
    for s in range(0, max(n, 1), block):
        ws = w[s:s + block]
        if a is None:
            out.append(np.array(np.sum(ws)))
        elif b is None:
            out.append(ws @ a[s:s + block])
        else:
            out.append(a[s:s + block].T @ (ws[:, None] * b[s:s + block]))
    return _pairwise(out)


def _plan(p: PeriodicForm, pot: Potential, cutoff, target_tail, derivative=True) -> SumPlan:
    return SumPlan(p, pot, cutoff, target_tail, derivative=derivative, strict=False)


def gradient_general(
    p: PeriodicForm, pot: Potential, cutoff: Optional[float] = None, target_tail: Optional[float] = None
) -> GradHess:
    """Gradient at any periodic form, by termwise differentiation of the coset sum."""
    return _derivatives(p, pot, _plan(p, pot, cutoff, target_tail), 1)


def hessian_general(
    p: PeriodicForm, pot: Potential, cutoff: Optional[float] = None, target_tail: Optional[float] = None
) -> GradHess:
    return _derivatives(p, pot, _plan(p, pot, cutoff, target_tail), 2)


def gradient_at_lattice(q, pot: Potential, cutoff: Optional[float] = None, target_tail=None) -> np.ndarray:
    """Traceless part of (sum_w f'(|Aw|^2) (Aw)(Aw)^t), as a Euclidean-frame matrix.

    Its scalar product with a traceless H gives the derivative of the energy
    along Q(H) = A^t exp(H) A.
    """
    q = _as_quadform(q)
    gh = gradient_general(PeriodicForm(q), pot, cutoff, target_tail)
    return TangentBasis(q.dim, 1).h_matrix(gh.gradient[: gh.n_h])


def hessian_at_lattice(
    p: PeriodicForm, pot: Potential, cutoff: Optional[float] = None, target_tail: Optional[float] = None
) -> GradHess:
    """Dense Hessian at a periodic form whose point set is a lattice.

    Difference vectors are grouped by coset class, so every pair (i, j) is
    weighted by the vectors of the class u_i - u_j only.  ``pooled_tt`` holds
    the translation block obtained instead by letting every pair run over
    the whole lattice with weight 1/m, for comparison.
    """
    plan = _plan(p, pot, cutoff, target_tail)
    if not plan.is_lattice:
        raise NotALatticeError("the periodic set is not a lattice")
    gh = _derivatives(p, pot, plan, 2)
    if p.m > 1:
        gh.pooled_tt = _pooled_tt(p, plan)
    return gh


def _pooled_tt(p: PeriodicForm, plan: SumPlan) -> np.ndarray:
    d, m = p.dim, p.m
    a = p.q.factor
    k = plan.kernel
    total = np.zeros((d, d))
    for pairs, v in plan.chunks():
        x = v @ a.T
        r = np.einsum("ni,ni->n", x, x)
        # each class of the lattice, counted once
        total += 4.0 * np.einsum("n,ni,nj->ij", k.g2(r), x, x) + 2.0 * float(np.sum(k.g1(r))) * np.eye(d)
    tt_all = total / m
    out = np.zeros(((m - 1) * d, (m - 1) * d))
    for i in range(1, m):
        for j in range(1, m):
            s = 0
            for aa in range(m):
                for bb in range(m):
                    s += ((aa == i) - (bb == i)) * ((aa == j) - (bb == j))
            out[(i - 1) * d: i * d, (j - 1) * d: j * d] = s * tt_all / m
    return out


# ---------------------------------------------------------------------------
# finite differences


def finite_difference(
    p: PeriodicForm,
    pot: Potential,
    order: int = 1,
    step: Optional[float] = None,
    cutoff: Optional[float] = None,
    target_tail: Optional[float] = None,
    richardson: bool = False,
) -> GradHess:
    """Central differences of the energy along the tangent basis through :func:`retract`.

    The set of difference vectors is frozen at ``p`` so the truncated energy
    is a smooth function of the coordinates.  Gram coordinates use ``step``,
    translation coordinates ``step * sqrt(min_norm)``.  The default step is
    1e-5 for gradients and 1e-3 for Hessians, where second differences would
    otherwise be dominated by rounding.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if step is None:
        step = 1e-5 if order == 1 else 1e-3
    if not step > 0:
        raise ValueError("step must be positive")
    plan = SumPlan(p, pot, cutoff, target_tail, strict=False)
    tb = TangentBasis(p.dim, p.m)
    scale = np.ones(tb.size)
    scale[tb.n_h:] = math.sqrt(min_norm(p.q))
    n = tb.size
    cache = {}

    def e(c):
        key = c.tobytes()
        if key not in cache:
            cache[key] = plan.energy_at(retract(p, tb.to_tangent(p, c)))
        return cache[key]

    def grad_h(h):
        g = np.zeros(n)
        for i in range(n):
            c = np.zeros(n)
            c[i] = h * scale[i]
            g[i] = (e(c) - e(-c)) / (2 * c[i])
        return g

    def hess_h(h):
        hm = np.zeros((n, n))
        e0 = e(np.zeros(n))
        for i in range(n):
            ci = np.zeros(n)
            ci[i] = h * scale[i]
            hm[i, i] = (e(ci) - 2 * e0 + e(-ci)) / ci[i] ** 2
            for j in range(i + 1, n):
                cj = np.zeros(n)
                cj[j] = h * scale[j]
                val = (e(ci + cj) - e(ci - cj) - e(-ci + cj) + e(-ci - cj)) / (4 * ci[i] * cj[j])
                hm[i, j] = hm[j, i] = val
        return hm

    if order == 1:
        g = grad_h(step)
        if richardson:
            g = (4 * grad_h(step / 2) - g) / 3
        return GradHess(g, None, tb, plan.cutoff, plan.tail_bound)
    hm = hess_h(step)
    if richardson:
        hm = (4 * hess_h(step / 2) - hm) / 3
    g = grad_h(step)
    return GradHess(g, hm, tb, plan.cutoff, plan.tail_bound)


# ---------------------------------------------------------------------------
# F / G split for lattices with 4-design shells


def shell_counts(q, bound: float) -> list[tuple]:
    """(alpha, count) for all shells up to ``bound``; exact when the Gram matrix is rational."""
    q = _as_quadform(q)
    if q.is_exact:
        try:
            return theta_counts(q, bound)
        except CutoffOverflow:
            pass
    return [(s.alpha_exact if s.alpha_exact is not None else s.alpha, s.count) for s in enumerate_shells(q, bound)]


def _mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def split_weight_bound(y: float, d: int):
    """Decreasing (past its peak) majorant of the F and G summands at y."""
    def phi(a):
        z = math.pi * y * a
        return (z + d / 2 + math.pi * a * (z + d / 2 + 1)) * np.exp(-z)
    return phi


def split_cutoff(q: QuadForm, y_min: float, tol: float = 1e-40) -> tuple[float, float]:
    """Shell bound making the omitted part of F and G below ``tol`` for every y >= y_min."""
    d = q.dim
    mu = min_norm(q)
    rho = math.sqrt(mu) / 2
    phi = split_weight_bound(y_min, d)
    a = max(mu, 3.0 / (math.pi * y_min))
    while tail_sum_bound(phi, a, rho, d) > tol:
        a *= 1.25
    return a, tail_sum_bound(phi, a, rho, d)


def f_and_g(counts, y: float, d: int, dps: int = 60):
    """F(y) and G(y) from (alpha, count) data, in extended precision."""
    with mpmath.workdps(dps):
        py = mpmath.pi * _mp(y)
        f = mpmath.mpf(0)
        g = mpmath.mpf(0)
        for alpha, n in counts:
            al = _mp(alpha)
            z = py * al
            ez = n * mpmath.exp(-z)
            f += (z - mpmath.mpf(d) / 2) * ez
            g += mpmath.pi * al * (z - (mpmath.mpf(d) / 2 + 1)) * ez
        return +f, +g


@dataclass
class HessianSplit:
    """F, G at y = c/pi and the coefficients of the split Hessian display.

    ``lattice_coefficient`` multiplies Tr(H^2)/(d(d+2)); ``translation_coefficient``
    multiplies sum_{i,k} |t_i - t_sigma_k(i)|^2.  Both describe the
    second-order Taylor term, i.e. half the Hessian.
    """

    y: float
    F_value: float
    G_value: float
    lattice_coefficient: float
    translation_coefficient: float
    shell_data: list
    d: int
    m: int
    design_verified_up_to: float
    tail_bound: float
    F_mp: object = field(default=None, repr=False)
    G_mp: object = field(default=None, repr=False)

    def taylor_term(self, h: np.ndarray, t_sq_sum: float) -> float:
        """The displayed quadratic form y[Tr(H^2)/(d(d+2)) G + 2 pi/(d m^2) (sum |t_i - t_s|^2) F]."""
        d, m = self.d, self.m
        disp = self.y * (float(np.trace(h @ h)) / (d * (d + 2)) * self.G_value
                         + 2 * math.pi / (d * m * m) * t_sq_sum * self.F_value)
        return disp

    def stored_form(self, h: np.ndarray, t_sq_sum: float) -> float:
        d = self.d
        return (float(np.trace(h @ h)) / (d * (d + 2)) * self.lattice_coefficient
                + t_sq_sum * self.translation_coefficient)

    @property
    def h_eigenvalue(self) -> float:
        """Eigenvalue of the H-block of the true Hessian in orthonormal coordinates."""
        return 2 * self.lattice_coefficient / (self.d * (self.d + 2))

    def to_json(self) -> dict:
        return {
            "y": self.y,
            "F": self.F_value,
            "G": self.G_value,
            "lattice_coefficient": self.lattice_coefficient,
            "translation_coefficient": self.translation_coefficient,
            "m": self.m,
            "design_verified_up_to": self.design_verified_up_to,
            "tail_bound": self.tail_bound,
            "shells_used": len(self.shell_data),
        }


def verify_4design(q: QuadForm, bound: float) -> None:
    for s in enumerate_shells(q, bound):
        rep = check_4design(s, q)
        if not rep.is_design:
            raise DesignHypothesisFailed(
                f"shell alpha={s.alpha:g} is not a 4-design (residual {rep.max_residual:.3g})"
            )


def hessian_split_design(
    lat,
    y: float,
    cutoff: float = 8.0,
    m: int = 1,
    counts=None,
    tail_tol: float = 1e-40,
) -> HessianSplit:
    """F(y), G(y) and the split coefficients.

    ``cutoff`` bounds the shells whose 4-design property is verified; the
    F and G sums themselves run over exact shell counts far enough that the
    omitted part is below ``tail_tol``.
    """
    q = _as_quadform(lat)
    if not y > 0:
        raise ValueError("y must be positive")
    verify_4design(q, cutoff)
    if counts is None:
        bound, tail = split_cutoff(q, y, tail_tol)
        counts = shell_counts(q, bound)
    else:
        tail = tail_tol
    fm, gm = f_and_g(counts, y, q.dim)
    f, g = float(fm), float(gm)
    d = q.dim
    return HessianSplit(
        y, f, g, y * g, 2 * math.pi * y * f / (d * m * m), [(a, n) for a, n in counts],
        d, m, float(cutoff), tail, fm, gm,
    )
