"""Quadratic forms, periodic forms and the geometry of their parameter space.

A periodic form ``(Q, u)`` describes the periodic set ``A (u_1 + Z^d) u ... u A (u_m + Z^d)``
with ``Q = A^t A``.  Translations live in lattice coordinates; tangent vectors
``(h, t)`` follow the same convention (``h`` is a symmetric matrix with
``Tr(Q^-1 h) = 0``, ``t`` holds coordinate displacements with ``t_1 = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidForm, InvalidTransform, PerturbationTooLarge

DISJOINT_TOL = 1e-9


def parse_number(x) -> Fraction | float:
    """Read an int, a float, or a rational string ``"p/q"``."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("boolean is not a number")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        return float(x)
    raise TypeError(f"cannot interpret {x!r} as a number")


def _exact_matrix(rows) -> Optional[tuple]:
    vals = [[parse_number(x) for x in row] for row in rows]
    if all(isinstance(x, Fraction) for row in vals for x in row):
        return tuple(tuple(row) for row in vals)
    return None


def frac_inverse(m: Sequence[Sequence[Fraction]]) -> list[list[Fraction]]:
    """Exact inverse by Gauss-Jordan elimination."""
    n = len(m)
    a = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise InvalidForm("singular matrix")
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [x / p for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n:] for row in a]


def frac_det(m: Sequence[Sequence[Fraction]]) -> Fraction:
    n = len(m)
    a = [list(row) for row in m]
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        p = a[col][col]
        det *= p
        for r in range(col + 1, n):
            if a[r][col] != 0:
                f = a[r][col] / p
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return det


class QuadForm:
    """Positive definite Gram matrix with cached factorization.

    ``gram_exact`` is kept when the matrix was given by rationals; the exact
    path of the design checks and shell grouping depends on it.
    """

    def __init__(self, gram, exact: Optional[Sequence[Sequence]] = None):
        if exact is None and not isinstance(gram, np.ndarray):
            exact = _exact_matrix(gram)
        if exact is not None:
            exact = tuple(tuple(Fraction(x) for x in row) for row in exact)
            g = np.array([[float(x) for x in row] for row in exact])
        else:
            g = np.array(gram, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] == 0:
            raise InvalidForm(f"gram must be a nonempty square matrix, got shape {g.shape}")
        if exact is not None:
            n = len(exact)
            if any(exact[i][j] != exact[j][i] for i in range(n) for j in range(n)):
                raise InvalidForm("gram is not symmetric")
        elif not np.array_equal(g, g.T):
            if np.max(np.abs(g - g.T)) > 1e-12 * max(1.0, np.max(np.abs(g))):
                raise InvalidForm("gram is not symmetric")
            g = 0.5 * (g + g.T)
        try:
            lower = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise InvalidForm("gram is not positive definite") from None
        self.gram = g
        self.gram_exact = exact
        self.dim = g.shape[0]
        # Q = A^t A with A upper triangular
        self.factor = lower.T.copy()
        self.gram.setflags(write=False)
        self.factor.setflags(write=False)

    @classmethod
    def from_rational(cls, numerators, denominator: int = 1) -> "QuadForm":
        ex = [[Fraction(int(x), int(denominator)) for x in row] for row in numerators]
        return cls(None, exact=ex)

    @property
    def is_exact(self) -> bool:
        return self.gram_exact is not None

    @cached_property
    def det(self) -> float:
        if self.is_exact:
            return float(self.det_exact)
        return float(np.prod(np.diag(self.factor)) ** 2)

    @cached_property
    def det_exact(self) -> Optional[Fraction]:
        return frac_det(self.gram_exact) if self.is_exact else None

    @cached_property
    def inverse(self) -> np.ndarray:
        ainv = np.linalg.inv(self.factor)
        inv = ainv @ ainv.T
        return 0.5 * (inv + inv.T)

    @cached_property
    def inverse_exact(self) -> Optional[list[list[Fraction]]]:
        return frac_inverse(self.gram_exact) if self.is_exact else None

    @cached_property
    def factor_inv(self) -> np.ndarray:
        return np.linalg.inv(self.factor)

    def norm_sq(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x @ self.factor.T
        return np.sum(y * y, axis=-1)

    def scaled(self, lam2) -> "QuadForm":
        """The form of the lattice scaled by ``sqrt(lam2)``."""
        if self.is_exact and isinstance(lam2, (int, Fraction)):
            return QuadForm(None, exact=[[x * Fraction(lam2) for x in row] for row in self.gram_exact])
        return QuadForm(self.gram * float(lam2))

    def __eq__(self, other):
        if not isinstance(other, QuadForm):
            return NotImplemented
        if self.is_exact and other.is_exact:
            return self.gram_exact == other.gram_exact
        return np.array_equal(self.gram, other.gram)

    def __hash__(self):
        return hash(self.gram.tobytes())

    def __repr__(self):
        return f"QuadForm(dim={self.dim}, det={self.det:.6g})"


def _reduce_float(u: np.ndarray) -> np.ndarray:
    r = u - np.floor(u)
    r[r > 1.0 - 1e-13] = 0.0
    return r


def _reduce_exact(u: Sequence[Fraction]) -> tuple:
    return tuple(x - (x.numerator // x.denominator) for x in u)


def _distance_to_integers(x: np.ndarray) -> float:
    return float(np.max(np.abs(x - np.round(x)))) if x.size else 0.0


class PeriodicForm:
    """An m-periodic form (Q, u_1..u_m) in normalized representation.

    The representative has ``u_1 = 0`` and every coordinate in ``[0, 1)``.
    """

    def __init__(self, q: QuadForm, translations=None, normalize: bool = True):
        if not isinstance(q, QuadForm):
            q = QuadForm(q)
        d = q.dim
        if translations is None:
            translations = [[0] * d]
        exact = None
        if not isinstance(translations, np.ndarray):
            rows = [list(r) for r in translations]
            if any(len(r) != d for r in rows):
                raise InvalidForm("translation dimension does not match gram")
            exact = _exact_matrix(rows) if rows else None
            t = np.array([[float(parse_number(x)) for x in r] for r in rows], dtype=float)
        else:
            t = np.array(translations, dtype=float)
        if t.ndim != 2 or t.shape[1] != d or t.shape[0] == 0:
            raise InvalidForm("translations must be a nonempty m x d array")
        if normalize:
            if exact is not None:
                first = exact[0]
                exact = tuple(_reduce_exact([a - b for a, b in zip(row, first)]) for row in exact)
                t = np.array([[float(x) for x in row] for row in exact])
            else:
                t = _reduce_float(t - t[0])
        m = t.shape[0]
        for i in range(m):
            for j in range(i):
                if _distance_to_integers(t[i] - t[j]) <= DISJOINT_TOL:
                    raise InvalidForm(f"translations {j + 1} and {i + 1} coincide modulo Z^d")
        self.q = q
        self.translations = t
        self.translations.setflags(write=False)
        self.translations_exact = exact
        self.m = m
        self.dim = d

    @property
    def is_exact(self) -> bool:
        return self.q.is_exact and self.translations_exact is not None

    @classmethod
    def lattice(cls, q) -> "PeriodicForm":
        return cls(q if isinstance(q, QuadForm) else QuadForm(q))

    def with_translations(self, translations) -> "PeriodicForm":
        return PeriodicForm(self.q, translations)

    def to_json(self) -> dict:
        out = {"dim": self.dim}
        if self.q.is_exact:
            den = 1
            for row in self.q.gram_exact:
                for x in row:
                    den = den * x.denominator // np.gcd(den, x.denominator)
            out["gram"] = [[int(x * den) for x in row] for row in self.q.gram_exact]
            if den != 1:
                out["gram_denominator"] = int(den)
        else:
            out["gram"] = self.q.gram.tolist()
        if self.translations_exact is not None:
            out["translations"] = [
                [str(x) if x.denominator != 1 else int(x) for x in row] for row in self.translations_exact
            ]
        else:
            out["translations"] = self.translations.tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PeriodicForm":
        try:
            dim = int(obj["dim"])
            gram = obj["gram"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidForm(f"malformed form description: {exc}") from None
        den = obj.get("gram_denominator")
        if den is not None:
            q = QuadForm.from_rational(gram, int(den))
        else:
            q = QuadForm(gram)
        if q.dim != dim:
            raise InvalidForm("dim does not match gram size")
        return cls(q, obj.get("translations"))

    def __repr__(self):
        return f"PeriodicForm(dim={self.dim}, m={self.m}, det={self.q.det:.6g})"


@dataclass
class LatticeBasis:
    """Basis matrix with columns as basis vectors."""

    basis: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim != 2 or self.basis.shape[0] != self.basis.shape[1]:
            raise InvalidForm("basis must be square")
        if abs(np.linalg.det(self.basis)) < 1e-300:
            raise InvalidForm("basis is singular")
        self.dim = self.basis.shape[0]

    @property
    def gram(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def quadform(self) -> QuadForm:
        return QuadForm(self.gram)


@dataclass
class TangentVec:
    """Tangent direction (h, t): h symmetric with Tr(Q^-1 h) = 0, t_1 = 0."""

    h: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.t = np.atleast_2d(np.asarray(self.t, dtype=float))

    @classmethod
    def zero(cls, d: int, m: int) -> "TangentVec":
        return cls(np.zeros((d, d)), np.zeros((m, d)))

    def validate(self, at: PeriodicForm | QuadForm) -> None:
        q = at.q if isinstance(at, PeriodicForm) else at
        d = q.dim
        if self.h.shape != (d, d):
            raise InvalidForm("tangent h has the wrong shape")
        if isinstance(at, PeriodicForm) and self.t.shape != (at.m, d):
            raise InvalidForm("tangent t has the wrong shape")
        if np.max(np.abs(self.h - self.h.T)) > 1e-12 * max(1.0, np.max(np.abs(self.h))):
            raise InvalidForm("tangent h is not symmetric")
        scale = max(1.0, np.linalg.norm(self.h))
        if abs(np.trace(q.inverse @ self.h)) > 1e-12 * scale:
            raise InvalidForm("tangent h violates Tr(Q^-1 h) = 0")
        if np.any(self.t[0] != 0.0):
            raise InvalidForm("tangent t_1 must be zero")

    def __add__(self, other):
        return TangentVec(self.h + other.h, self.t + other.t)

    def __mul__(self, s):
        return TangentVec(self.h * s, self.t * s)

    __rmul__ = __mul__


def inner_product(a: TangentVec, b: TangentVec, at: QuadForm | PeriodicForm) -> float:
    """Invariant scalar product Tr(Q^-1 a.h Q^-1 b.h) + sum_i Q(a.t_i, b.t_i).

    Translation parts are measured with Q so that coordinates of the
    Euclidean frame are orthonormal; this agrees with the plain dot product
    at Q = Id.
    """
    q = at.q if isinstance(at, PeriodicForm) else at
    if a.h.shape != b.h.shape or a.h.shape != (q.dim, q.dim) or a.t.shape != b.t.shape:
        raise InvalidForm("dimension mismatch in inner product")
    qi = q.inverse
    ht = float(np.trace(qi @ a.h @ qi @ b.h))
    tt = float(np.sum((a.t @ q.gram) * b.t))
    return ht + tt


def sym_expm(h: np.ndarray) -> np.ndarray:
    h = 0.5 * (h + h.T)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(w)) @ v.T


def retract(base: PeriodicForm, direction: TangentVec, scale: float = 1.0) -> PeriodicForm:
    """Move from ``base`` along ``direction`` via the matrix exponential."""
    q0 = base.q
    if direction.h.shape != (q0.dim, q0.dim) or direction.t.shape != (base.m, q0.dim):
        raise InvalidForm("tangent vector does not match base form")
    if scale == 0:
        return base
    a = q0.factor
    ainv = q0.factor_inv
    hn = ainv.T @ (scale * direction.h) @ ainv
    g = a.T @ sym_expm(hn) @ a
    g = 0.5 * (g + g.T)
    det = np.linalg.det(g)
    if not det > 0:
        raise PerturbationTooLarge("retracted form is not positive definite")
    g *= (q0.det / det) ** (1.0 / q0.dim)
    u = np.array(base.translations) + scale * direction.t
    try:
        return PeriodicForm(QuadForm(g), u)
    except InvalidForm as exc:
        raise PerturbationTooLarge(str(exc)) from None


def point_density(p: PeriodicForm) -> float:
    return p.m / np.sqrt(p.q.det)


def apply_unimodular(p: PeriodicForm, u) -> PeriodicForm:
    """Change of basis by an integral matrix of determinant +-1."""
    u = np.asarray(u)
    if u.shape != (p.dim, p.dim):
        raise InvalidTransform("transform has the wrong shape")
    if not np.issubdtype(u.dtype, np.integer):
        if not np.all(u == np.round(u)):
            raise InvalidTransform("transform must have integer entries")
        u = np.round(u).astype(np.int64)
    ui = [[Fraction(int(x)) for x in row] for row in u]
    det = frac_det(ui)
    if abs(det) != 1:
        raise InvalidTransform(f"transform has determinant {det}, expected +-1")
    inv = frac_inverse(ui)
    if p.q.is_exact:
        g = p.q.gram_exact
        d = p.dim
        g2 = [[sum(ui[k][i] * g[k][l] * ui[l][j] for k in range(d) for l in range(d)) for j in range(d)]
              for i in range(d)]
        q2 = QuadForm(None, exact=g2)
    else:
        uf = u.astype(float)
        q2 = QuadForm(uf.T @ p.q.gram @ uf)
    if p.translations_exact is not None:
        tr = [[sum(inv[i][k] * row[k] for k in range(p.dim)) for i in range(p.dim)]
              for row in p.translations_exact]
    else:
        invf = np.array([[float(x) for x in row] for row in inv])
        tr = p.translations @ invf.T
    return PeriodicForm(q2, tr)


# ---------------------------------------------------------------------------
# Fixed orthonormal tangent basis in the Euclidean frame


def traceless_basis(d: int) -> list[np.ndarray]:
    """Orthonormal basis of traceless symmetric matrices under Tr(XY).

    Diagonal part uses the Helmert contrasts, off-diagonal part
    (E_ij + E_ji)/sqrt(2) for i < j.
    """
    out = []
    for k in range(1, d):
        b = np.zeros((d, d))
        b[np.arange(k), np.arange(k)] = 1.0
        b[k, k] = -float(k)
        out.append(b / np.sqrt(k * (k + 1)))
    for i in range(d):
        for j in range(i + 1, d):
            b = np.zeros((d, d))
            b[i, j] = b[j, i] = 1.0 / np.sqrt(2.0)
            out.append(b)
    return out


@dataclass
class TangentBasis:
    """Ordered coordinates on the tangent space at a base form.

    The first ``d(d+1)/2 - 1`` coordinates act on the Gram part, the next
    ``(m-1) d`` move translations 2..m along Euclidean axes.
    """

    d: int
    m: int
    h_basis: list = field(init=False)

    def __post_init__(self):
        self.h_basis = traceless_basis(self.d)

    @property
    def n_h(self) -> int:
        return len(self.h_basis)

    @property
    def size(self) -> int:
        return self.n_h + (self.m - 1) * self.d

    def description(self) -> list[str]:
        out = []
        for k in range(1, self.d):
            out.append(f"H:diag_contrast_{k}")
        for i in range(self.d):
            for j in range(i + 1, self.d):
                out.append(f"H:offdiag_{i + 1}_{j + 1}")
        for i in range(1, self.m):
            for c in range(self.d):
                out.append(f"t:{i + 1}:{c + 1}")
        return out

    def split(self, coords):
        coords = np.asarray(coords, dtype=float)
        hc = coords[: self.n_h]
        tc = coords[self.n_h:].reshape(self.m - 1, self.d) if self.m > 1 else np.zeros((0, self.d))
        return hc, tc

    def h_matrix(self, hc) -> np.ndarray:
        """Euclidean-frame symmetric matrix for H coordinates."""
        out = np.zeros((self.d, self.d))
        for c, b in zip(hc, self.h_basis):
            out += c * b
        return out

    def h_coords(self, hmat) -> np.ndarray:
        return np.array([np.sum(b * hmat) for b in self.h_basis])

    def to_tangent(self, base: PeriodicForm, coords) -> TangentVec:
        hc, tc = self.split(coords)
        a = base.q.factor
        k = a.T @ self.h_matrix(hc) @ a
        t = np.zeros((self.m, self.d))
        if self.m > 1:
            t[1:] = tc @ base.q.factor_inv.T
        return TangentVec(0.5 * (k + k.T), t)

    def from_tangent(self, base: PeriodicForm, tv: TangentVec) -> np.ndarray:
        ainv = base.q.factor_inv
        hmat = ainv.T @ tv.h @ ainv
        tc = (tv.t[1:] @ base.q.factor.T).ravel() if self.m > 1 else np.zeros(0)
        return np.concatenate([self.h_coords(hmat), tc])
