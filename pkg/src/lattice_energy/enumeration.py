"""Lattice vectors by norm: shells, minimal norms, coset differences, theta counts."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from ._fp import points_in_ellipsoid, slab_counts
from .errors import CutoffOverflow, InvalidForm
from .forms import DISJOINT_TOL, PeriodicForm, QuadForm, frac_inverse

SHELL_RTOL = 1e-9


@dataclass
class Shell:
    """All vectors of one squared norm.  ``vectors`` are lattice coordinates."""

    alpha: float
    vectors: np.ndarray
    alpha_exact: Optional[Fraction] = None

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    def key(self):
        return self.alpha_exact if self.alpha_exact is not None else self.alpha


def _as_quadform(q) -> QuadForm:
    if isinstance(q, QuadForm):
        return q
    if isinstance(q, PeriodicForm):
        return q.q
    return QuadForm(q)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _common_denominator(values) -> int:
    den = 1
    for x in values:
        den = _lcm(den, Fraction(x).denominator)
    return den


class _Coset:
    """Points offset + Z^d of one coset, enumerated by Q-norm."""

    def __init__(self, q: QuadForm, offset, offset_exact=None):
        self.q = q
        self.offset = np.asarray(offset, dtype=float)
        self.offset_exact = offset_exact if (offset_exact is not None and q.is_exact) else None

    def enumerate(self, bound: float, exclude_zero: bool = True):
        """Return (z, coords, norms, exact_norms or None), sorted by norm then coordinates."""
        q = self.q
        z = points_in_ellipsoid(q.factor, self.offset, bound)
        if self.offset_exact is not None:
            gden = _common_denominator(x for row in q.gram_exact for x in row)
            gint = np.array([[int(x * gden) for x in row] for row in q.gram_exact], dtype=np.int64)
            oden = _common_denominator(self.offset_exact)
            onum = np.array([int(x * oden) for x in self.offset_exact], dtype=np.int64)
            vint = z * oden + onum
            num = np.einsum("ni,ij,nj->n", vint, gint, vint)
            scale = gden * oden * oden
            limit = Fraction(bound) * scale
            keep = num <= math.floor(limit)
            if exclude_zero:
                keep &= num != 0
            z, num = z[keep], num[keep]
            norms = num / scale
            coords = z + self.offset
            order = np.lexsort(tuple(coords[:, k] for k in range(coords.shape[1] - 1, -1, -1)) + (num,))
            z, coords, norms, num = z[order], coords[order], norms[order], num[order]
            exact = [Fraction(int(n), scale) for n in num]
            return z, coords, norms, exact
        coords = z + self.offset
        norms = q.norm_sq(coords)
        keep = norms <= bound * (1.0 + 1e-12)
        if exclude_zero:
            keep &= norms > 0.0
        z, coords, norms = z[keep], coords[keep], norms[keep]
        order = np.lexsort(tuple(coords[:, k] for k in range(coords.shape[1] - 1, -1, -1)) + (norms,))
        return z[order], coords[order], norms[order], None


def _group(coords, norms, exact, as_int: bool) -> list[Shell]:
    shells = []
    n = len(norms)
    if n == 0:
        return shells
    start = 0
    vec = coords.astype(np.int64) if as_int else coords
    if exact is not None:
        for k in range(1, n + 1):
            if k == n or exact[k] != exact[start]:
                shells.append(Shell(float(exact[start]), vec[start:k], exact[start]))
                start = k
        return shells
    # float path: sequential grouping against the first norm of the run, then
    # re-sort each run lexicographically
    k = 1
    while start < n:
        a0 = norms[start]
        k = start + 1
        while k < n and abs(norms[k] - a0) <= SHELL_RTOL * a0:
            k += 1
        block = vec[start:k]
        order = np.lexsort(tuple(block[:, c] for c in range(block.shape[1] - 1, -1, -1)))
        shells.append(Shell(float(np.mean(norms[start:k])), block[order]))
        start = k
    return shells


def enumerate_shells(q, max_norm_sq: float) -> list[Shell]:
    """Every shell with 0 < alpha <= max_norm_sq, ascending."""
    q = _as_quadform(q)
    if not max_norm_sq > 0:
        raise ValueError("max_norm_sq must be positive")
    zero = [Fraction(0)] * q.dim if q.is_exact else None
    _, coords, norms, exact = _Coset(q, np.zeros(q.dim), zero).enumerate(max_norm_sq)
    return _group(coords, norms, exact, as_int=True)


def lattice_vectors(q, max_norm_sq: float):
    """Flat (vectors, norms) of all nonzero lattice vectors up to the bound."""
    q = _as_quadform(q)
    z, _, norms, _ = _Coset(q, np.zeros(q.dim)).enumerate(max_norm_sq)
    return z, norms


def min_norm_exact(q) -> Fraction | float:
    q = _as_quadform(q)
    bound = float(np.min(np.diag(q.gram)))
    shells = enumerate_shells(q, bound)
    return shells[0].key()


def min_norm(q) -> float:
    """Smallest squared norm of a nonzero vector."""
    return float(min_norm_exact(q))


def dual_min_norm(q) -> float:
    q = _as_quadform(q)
    return min_norm(QuadForm(q.inverse))


# ---------------------------------------------------------------------------
# lattice detection


@dataclass
class PermutationTable:
    """sigma[k][i] = index j with u_j = u_i - u_k mod Z^d (0-based)."""

    m: int
    sigma: np.ndarray

    def row_one_based(self, k: int) -> list[int]:
        """sigma_k as a list of 1-based indices, k itself 1-based."""
        return [int(x) + 1 for x in self.sigma[k - 1]]

    def cycles(self, k: int) -> list[tuple[int, ...]]:
        """Nontrivial cycles of sigma_k, k and entries 1-based."""
        k -= 1
        seen, out = set(), []
        for s in range(self.m):
            if s in seen:
                continue
            cyc, x = [], s
            while x not in seen:
                seen.add(x)
                cyc.append(x + 1)
                x = int(self.sigma[k][x])
            if len(cyc) > 1:
                out.append(tuple(cyc))
        return out


@dataclass
class NotALattice:
    k: int
    i: int

    def __bool__(self):
        return False


def _same_mod_one(p: PeriodicForm, a: int, b: int, diff_exact=None, diff=None) -> bool:
    if diff_exact is not None:
        return all((x - y).denominator == 1 for x, y in zip(p.translations_exact[a], diff_exact))
    x = p.translations[a] - diff
    return float(np.max(np.abs(x - np.round(x)))) <= DISJOINT_TOL


def detect_lattice(p: PeriodicForm) -> PermutationTable | NotALattice:
    m = p.m
    sigma = np.full((m, m), -1, dtype=np.int64)
    for k in range(m):
        for i in range(m):
            if p.translations_exact is not None:
                de = [x - y for x, y in zip(p.translations_exact[i], p.translations_exact[k])]
                hits = [j for j in range(m) if _same_mod_one(p, j, 0, diff_exact=de)]
            else:
                df = p.translations[i] - p.translations[k]
                hits = [j for j in range(m) if _same_mod_one(p, j, 0, diff=df)]
            if len(hits) != 1:
                return NotALattice(k + 1, i + 1)
            sigma[k, i] = hits[0]
        if sorted(sigma[k]) != list(range(m)):
            return NotALattice(k + 1, int(np.argmax(np.bincount(sigma[k], minlength=m) != 1)) + 1)
    return PermutationTable(m, sigma)


# ---------------------------------------------------------------------------
# coset differences


def _pair_offset(p: PeriodicForm, i: int, j: int):
    off = p.translations[i] - p.translations[j]
    ex = None
    if p.translations_exact is not None:
        ex = [a - b for a, b in zip(p.translations_exact[i], p.translations_exact[j])]
    return off, ex


def periodic_difference_shells(p: PeriodicForm, max_norm_sq: float) -> dict:
    """{(i, j): shells of nonzero v = u_i - u_j + z} with 0-based pair indices."""
    out = {}
    for i in range(p.m):
        for j in range(p.m):
            off, ex = _pair_offset(p, i, j)
            _, coords, norms, exact = _Coset(p.q, off, ex).enumerate(max_norm_sq)
            out[(i, j)] = _group(coords, norms, exact, as_int=(i == j))
    return out


@dataclass
class DifferenceSet:
    """Flat list of difference vectors u_i - u_j + z with Q-norm <= cutoff.

    ``z`` are the integer parts relative to the base translations, so the set
    can be re-evaluated at nearby forms.
    """

    pair_i: np.ndarray
    pair_j: np.ndarray
    z: np.ndarray
    coords: np.ndarray
    norms: np.ndarray
    cutoff: float
    m: int

    def __len__(self):
        return int(self.norms.shape[0])


def difference_set(p: PeriodicForm, cutoff: float, max_vectors: Optional[int] = None) -> DifferenceSet:
    pi, pj, zs, cs, ns = [], [], [], [], []
    total = 0
    for i in range(p.m):
        for j in range(p.m):
            off, _ = _pair_offset(p, i, j)
            z, coords, norms, _ = _Coset(p.q, off).enumerate(cutoff)
            total += len(norms)
            if max_vectors is not None and total > max_vectors:
                raise CutoffOverflow(f"more than {max_vectors} difference vectors below {cutoff}")
            pi.append(np.full(len(norms), i))
            pj.append(np.full(len(norms), j))
            zs.append(z)
            cs.append(coords)
            ns.append(norms)
    d = p.dim
    return DifferenceSet(
        np.concatenate(pi).astype(np.int64),
        np.concatenate(pj).astype(np.int64),
        np.concatenate(zs).reshape(-1, d),
        np.concatenate(cs).reshape(-1, d),
        np.concatenate(ns),
        float(cutoff),
        p.m,
    )


def iter_blocks(q: QuadForm, offset, bound: float, chunk: int = 400_000):
    """Yield (z, coords, norms) for the nonzero points of offset + Z^d with norm <= bound,
    in blocks of consecutive values of the last coordinate holding about ``chunk`` points."""
    q = _as_quadform(q)
    offset = np.asarray(offset, dtype=float)
    lo, counts = slab_counts(q.factor, offset, bound)
    start, acc = 0, 0
    for k, n in enumerate(counts):
        acc += int(n)
        if acc < chunk and k < len(counts) - 1:
            continue
        if acc:
            z = points_in_ellipsoid(q.factor, offset, bound, top=(lo + start, lo + k), count=acc)
            coords = z + offset
            norms = q.norm_sq(coords)
            keep = (norms <= bound * (1.0 + 1e-12)) & (norms > 0)
            if np.any(keep):
                yield z[keep], coords[keep], norms[keep]
        start, acc = k + 1, 0


def estimate_count(q: QuadForm, bound: float, m: int = 1) -> float:
    """Volume estimate of the number of difference vectors with norm <= bound."""
    d = q.dim
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * bound ** (d / 2)
    return m * m * vol / math.sqrt(q.det)


# ---------------------------------------------------------------------------
# integer row reduction helpers


def hnf_rows(rows) -> list[list[int]]:
    """Upper triangular basis (positive pivots) of the row lattice of an integer matrix."""
    a = [list(map(int, r)) for r in rows]
    a = [r for r in a if any(r)]
    if not a:
        return []
    n = len(a[0])
    out = []
    col = 0
    while a and col < n:
        nz = [r for r in a if r[col] != 0]
        zero = [r for r in a if r[col] == 0]
        while len(nz) > 1:
            nz.sort(key=lambda r: abs(r[col]))
            piv = nz[0]
            rest = []
            for r in nz[1:]:
                f = r[col] // piv[col]
                r2 = [x - f * y for x, y in zip(r, piv)]
                (rest if r2[col] != 0 else zero).append(r2)
            nz = [piv] + rest
        if nz:
            piv = nz[0]
            if piv[col] < 0:
                piv = [-x for x in piv]
            out.append(piv)
        a = [r for r in zero if any(r)]
        col += 1
    # reduce entries above pivots
    for k in range(len(out)):
        c = next(i for i, x in enumerate(out[k]) if x != 0)
        for r in range(k):
            f = out[r][c] // out[k][c]
            if f:
                out[r] = [x - f * y for x, y in zip(out[r], out[k])]
    return out


def lattice_gram_of(p: PeriodicForm) -> QuadForm:
    """Gram matrix of the group generated by Z^d and the translations.

    Equals the set itself exactly when :func:`detect_lattice` succeeds.
    """
    if p.m == 1:
        return p.q
    if p.translations_exact is not None:
        tr = p.translations_exact
    else:
        tr = [[Fraction(float(x)).limit_denominator(10**6) for x in row] for row in p.translations]
    den = _common_denominator(x for row in tr for x in row)
    gens = [[den * int(i == j) for j in range(p.dim)] for i in range(p.dim)]
    gens += [[int(x * den) for x in row] for row in tr]
    basis = hnf_rows(gens)
    if p.q.is_exact:
        g = p.q.gram_exact
        d = p.dim
        gram = [[sum(Fraction(basis[a][k]) * g[k][l] * basis[b][l] for k in range(d) for l in range(d))
                 / (den * den) for b in range(d)] for a in range(d)]
        return QuadForm(None, exact=gram)
    b = np.array(basis, dtype=float) / den
    return QuadForm(b @ p.q.gram @ b.T)


def coset_decomposition(q: QuadForm, m: int, seed: int = 0) -> PeriodicForm:
    """Represent the lattice of ``q`` as m cosets of an index-m sublattice.

    The sublattice has basis columns given by an upper triangular Hermite
    matrix with determinant m drawn from ``seed``; the translations are the
    coset representatives written in sublattice coordinates.
    """
    q = _as_quadform(q)
    d = q.dim
    if m == 1:
        return PeriodicForm(q)
    rng = np.random.default_rng(seed)
    # spread the prime factors of m over random diagonal slots
    diag = [1] * d
    rest, f = m, 2
    while rest > 1:
        while rest % f == 0:
            diag[int(rng.integers(d))] *= f
            rest //= f
        f += 1
    h = [[0] * d for _ in range(d)]
    for i in range(d):
        h[i][i] = diag[i]
        for j in range(i + 1, d):
            h[i][j] = int(rng.integers(diag[i]))
    # columns of h generate the sublattice: points h x, x in Z^d
    hf = [[Fraction(x) for x in row] for row in h]
    hinv = frac_inverse(hf)
    if q.is_exact:
        g = q.gram_exact
        g2 = [[sum(hf[k][a] * g[k][l] * hf[l][b] for k in range(d) for l in range(d)) for b in range(d)]
              for a in range(d)]
        q2 = QuadForm(None, exact=g2)
    else:
        hm = np.array(h, dtype=float)
        q2 = QuadForm(hm.T @ q.gram @ hm)
    # coset representatives of Z^d / h Z^d; h is upper triangular, so reduce
    # from the last coordinate upward
    reps = itertools.product(*[range(x) for x in diag])
    trans = []
    for r in reps:
        u = [sum(hinv[i][k] * r[k] for k in range(d)) for i in range(d)]
        trans.append(u)
    trans.sort(key=lambda u: (any(x % 1 for x in u), [x % 1 for x in u]))
    return PeriodicForm(q2, trans)


# ---------------------------------------------------------------------------
# exact shell counts through an orthogonal frame


def _orthogonal_frame(q: QuadForm, max_tries: int = 6):
    g = [[Fraction(x) for x in row] for row in q.gram_exact]
    d = q.dim
    bound = float(np.max(np.diag(q.gram)))
    for _ in range(max_tries):
        z, norms = lattice_vectors(q, bound)
        picked: list[np.ndarray] = []
        for v in z:
            if len(picked) == d:
                break
            first = next(x for x in v if x != 0)
            if first < 0:
                continue
            vi = [int(x) for x in v]
            ok = True
            for w in picked:
                s = sum(vi[a] * g[a][b] * int(w[b]) for a in range(d) for b in range(d) if vi[a] and w[b])
                if s != 0:
                    ok = False
                    break
            if ok:
                picked.append(np.array(vi, dtype=np.int64))
        if len(picked) == d:
            return picked
        bound *= 2
    raise CutoffOverflow("no orthogonal frame found among short vectors")


def theta_counts(q, max_norm_sq: float, max_index: int = 200000) -> list[tuple[Fraction, int]]:
    """Exact (alpha, |shell|) for 0 < alpha <= max_norm_sq without listing vectors.

    The lattice is split into cosets of an orthogonal sublattice spanned by
    short mutually orthogonal vectors; each coset's theta series is a product
    of one-dimensional series.  Requires a rational Gram matrix.
    """
    q = _as_quadform(q)
    if not q.is_exact:
        raise InvalidForm("theta_counts needs an exact rational Gram matrix")
    d = q.dim
    g = q.gram_exact
    frame = _orthogonal_frame(q)
    w = [[Fraction(int(x)) for x in v] for v in frame]
    norms = [sum(w[i][a] * g[a][b] * w[i][b] for a in range(d) for b in range(d)) for i in range(d)]
    h = hnf_rows([[int(x) for x in v] for v in frame])
    index = 1
    for k in range(d):
        index *= h[k][k]
    if index > max_index:
        raise CutoffOverflow(f"orthogonal frame has index {index}")
    winv = frac_inverse(w)
    reps = []
    for x in itertools.product(*[range(h[k][k]) for k in range(d)]):
        # rep x = sum_i c_i w_i with rational c
        c = [sum(Fraction(x[a]) * winv[a][i] for a in range(d)) for i in range(d)]
        reps.append([ci - math.floor(ci) for ci in c])
    den = 1
    for c in reps:
        for ci, ni in zip(c, norms):
            den = _lcm(den, (ci * ci * ni).denominator)
            den = _lcm(den, (2 * ci * ni).denominator)
            den = _lcm(den, ni.denominator)
    bound = Fraction(max_norm_sq)
    length = int(math.floor(bound * den)) + 1
    total = np.zeros(length, dtype=object)
    cache = {}
    for c in reps:
        acc = {0: 1}
        for ci, ni in zip(c, norms):
            key = (ci, ni)
            if key not in cache:
                terms = {}
                nmax = int(math.isqrt(int(bound / ni) + 1)) + 2
                for n in range(-nmax - 1, nmax + 2):
                    e = (ci + n) ** 2 * ni * den
                    if e <= bound * den:
                        terms[int(e)] = terms.get(int(e), 0) + 1
                cache[key] = terms
            terms = cache[key]
            new = {}
            for e1, c1 in acc.items():
                for e2, c2 in terms.items():
                    e = e1 + e2
                    if e < length:
                        new[e] = new.get(e, 0) + c1 * c2
            acc = new
        for e, cnt in acc.items():
            total[e] += cnt
    out = []
    for e in range(1, length):
        if total[e]:
            out.append((Fraction(e, den), int(total[e])))
    return out
