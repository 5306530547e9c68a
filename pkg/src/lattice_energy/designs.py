"""Spherical design tests for lattice shells via moment identities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Optional

import numpy as np

from .enumeration import Shell, enumerate_shells, _as_quadform
from .errors import EmptyShell, NotAntipodal, UnsupportedParity
from .forms import QuadForm

DESIGN_RTOL = 1e-9


@dataclass
class DesignReport:
    alpha: float
    count: int
    t_checked: int
    is_design: bool
    max_residual: float
    c_t: Optional[float]
    exact: bool = False
    certifying: bool = True

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "count": self.count,
            "t_checked": self.t_checked,
            "is_design": self.is_design,
            "max_residual": self.max_residual,
            "c_t": self.c_t,
            "exact": self.exact,
            "certifying": self.certifying,
        }


def _check_shell(shell: Shell) -> None:
    if shell.count == 0:
        raise EmptyShell("shell has no vectors")
    v = np.asarray(shell.vectors)
    keys = {tuple(np.round(x, 9)) for x in v}
    if any(tuple(np.round(-x, 9)) not in keys for x in v):
        raise NotAntipodal("shell is not closed under w -> -w")


def _exact_ok(shell: Shell, q: QuadForm) -> bool:
    return (
        q.is_exact
        and shell.alpha_exact is not None
        and np.issubdtype(np.asarray(shell.vectors).dtype, np.integer)
    )


def _euclidean(shell: Shell, q: QuadForm) -> np.ndarray:
    return np.asarray(shell.vectors, dtype=float) @ q.factor.T


def _random_symmetric(d: int, n: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x = rng.standard_normal((d, d))
        out.append(0.5 * (x + x.T))
    return out


def moment4(shell: Shell, q: QuadForm, h: np.ndarray) -> tuple[float, float]:
    """(sum_w H[Aw]^2, alpha^2 |shell| ((Tr H)^2 + 2 Tr H^2) / (d(d+2))) for Euclidean H."""
    x = _euclidean(shell, q)
    d = q.dim
    lhs = float(np.sum(np.einsum("ni,ij,nj->n", x, h, x) ** 2))
    rhs = shell.alpha ** 2 * shell.count / (d * (d + 2)) * (np.trace(h) ** 2 + 2 * np.trace(h @ h))
    return lhs, float(rhs)


def check_2design(shell: Shell, q) -> DesignReport:
    """Test sum_w (Aw)(Aw)^t = (alpha |shell| / d) Id."""
    q = _as_quadform(q)
    _check_shell(shell)
    d = q.dim
    n = shell.count
    if _exact_ok(shell, q):
        # lattice coordinates: sum w w^t = c Q^-1 with c = alpha n / d
        w = np.asarray(shell.vectors, dtype=np.int64)
        m = w.T @ w
        c = shell.alpha_exact * n / d
        qi = q.inverse_exact
        diff = max(abs(Fraction(int(m[i, j])) - c * qi[i][j]) for i in range(d) for j in range(d))
        scale = c * max(abs(x) for row in qi for x in row)
        res = float(diff / scale)
        return DesignReport(shell.alpha, n, 2, diff == 0, res, float(c), exact=True)
    x = _euclidean(shell, q)
    c = shell.alpha * n / d
    res = float(np.max(np.abs(x.T @ x - c * np.eye(d))) / c)
    return DesignReport(shell.alpha, n, 2, res <= DESIGN_RTOL, res, c)


def _sym4_target(p, a, b, c, e):
    return p[a][b] * p[c][e] + p[a][c] * p[b][e] + p[a][e] * p[b][c]


def check_4design(shell: Shell, q) -> DesignReport:
    """Complete test of sum_w H[Aw]^2 = alpha^2 |shell| ((Tr H)^2 + 2 Tr H^2) / (d(d+2)) for all symmetric H.

    The identity is polarized into the fourth moment tensor, which covers the
    whole space of symmetric H at once; ten random H are evaluated as a
    redundant floating-point check.
    """
    q = _as_quadform(q)
    _check_shell(shell)
    d = q.dim
    n = shell.count
    # c4 = sum_w (Aw . y)^4 / |y|^4 for a 4-design
    exact = _exact_ok(shell, q)
    if exact:
        w = np.asarray(shell.vectors, dtype=np.int64)
        k = shell.alpha_exact ** 2 * n / (d * (d + 2))
        p = q.inverse_exact
        worst = Fraction(0)
        scale = k * max(abs(x) for row in p for x in row) ** 2
        for a, b, c, e in combinations_with_replacement(range(d), 4):
            lhs = int(np.sum(w[:, a] * w[:, b] * w[:, c] * w[:, e]))
            diff = abs(lhs - k * _sym4_target(p, a, b, c, e))
            if diff > worst:
                worst = diff
        res = float(worst / scale)
        ok = worst == 0
        c4 = 3 * k
    else:
        x = _euclidean(shell, q)
        k = shell.alpha ** 2 * n / (d * (d + 2))
        eye = np.eye(d)
        target = k * (
            np.einsum("ab,ce->abce", eye, eye)
            + np.einsum("ac,be->abce", eye, eye)
            + np.einsum("ae,bc->abce", eye, eye)
        )
        t4 = np.zeros((d, d, d, d))
        for s in range(0, n, 4096):
            blk = x[s:s + 4096]
            t4 += np.einsum("na,nb,nc,ne->abce", blk, blk, blk, blk, optimize=True)
        res = float(np.max(np.abs(t4 - target)) / k)
        ok = res <= DESIGN_RTOL
        c4 = 3 * k
    # redundant sampled identity
    for h in _random_symmetric(d, 10):
        lhs, rhs = moment4(shell, q, h)
        scale = shell.alpha ** 2 * n * np.sum(h * h)
        r = abs(lhs - rhs) / scale
        if not exact:
            res = max(res, r)
        elif ok and r > DESIGN_RTOL:
            ok = False
            res = max(res, r)
    if not exact:
        ok = res <= DESIGN_RTOL
    return DesignReport(shell.alpha, n, 4, bool(ok), float(res), float(c4), exact=exact)


def _directions(d: int, n_random: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = [rng.standard_normal(d) for _ in range(n_random)]
    eye = np.eye(d)
    dirs += list(eye)
    for i in range(d):
        for j in range(i + 1, d):
            dirs.append(eye[i] + eye[j])
            dirs.append(eye[i] - eye[j])
    return np.array(dirs)


def check_design_even_t(shell: Shell, q, t: int, n_random: int = 64, seed: int = 0) -> DesignReport:
    """Test that sum_w (Aw . y)^t / |y|^t does not depend on the direction y.

    Directions are random plus coordinate and coordinate-pair axes.  The
    verdict is marked certifying only when there are at least as many
    directions as degree-t forms in d variables.
    """
    q = _as_quadform(q)
    if t < 2 or t % 2:
        raise UnsupportedParity(f"only even t >= 2 are supported, got {t}")
    _check_shell(shell)
    d = q.dim
    x = _euclidean(shell, q)
    y = _directions(d, max(n_random, 50), seed)
    y /= np.linalg.norm(y, axis=1)[:, None]
    vals = np.sum((x @ y.T) ** t, axis=0)
    c = float(np.mean(vals))
    res = float(np.max(np.abs(vals - c)) / c)
    certifying = len(y) >= math.comb(d + t - 1, t)
    return DesignReport(shell.alpha, shell.count, t, res <= DESIGN_RTOL, res, c, certifying=certifying)


@dataclass
class DesignSurvey:
    """Per-shell reports and their conjunction, valid only up to ``verified_up_to``."""

    reports: list = field(default_factory=list)
    t: int = 4
    verified_up_to: float = 0.0

    @property
    def all_design(self) -> bool:
        return all(r.is_design for r in self.reports)

    @property
    def label(self) -> str:
        return f"verified up to max_norm_sq = {self.verified_up_to:g}"

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)

    def __getitem__(self, i):
        return self.reports[i]

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "shells": [r.to_json() for r in self.reports],
            "all_design": self.all_design,
            "verified_up_to": self.verified_up_to,
            "label": self.label,
        }


def check_design(shell: Shell, q, t: int) -> DesignReport:
    if t == 2:
        return check_2design(shell, q)
    if t == 4:
        return check_4design(shell, q)
    return check_design_even_t(shell, q, t)


def all_shells_design(q, t: int, max_norm_sq: float) -> DesignSurvey:
    q = _as_quadform(q)
    if t < 2 or t % 2:
        raise UnsupportedParity(f"only even t >= 2 are supported, got {t}")
    reports = [check_design(s, q, t) for s in enumerate_shells(q, max_norm_sq)]
    return DesignSurvey(reports, t, float(max_norm_sq))
