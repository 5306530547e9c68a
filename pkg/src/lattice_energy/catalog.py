"""Built-in exact lattices and periodic sets."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .errors import UnknownLattice
from .forms import PeriodicForm, QuadForm, frac_inverse

A2 = [[2, 1], [1, 2]]
D4 = [[2, -1, 0, 0], [-1, 2, -1, -1], [0, -1, 2, 0], [0, -1, 0, 2]]
E8 = [
    [2, -1, 0, 0, 0, 0, 0, 0],
    [-1, 2, -1, 0, 0, 0, 0, 0],
    [0, -1, 2, -1, 0, 0, 0, -1],
    [0, 0, -1, 2, -1, 0, 0, 0],
    [0, 0, 0, -1, 2, -1, 0, 0],
    [0, 0, 0, 0, -1, 2, -1, 0],
    [0, 0, 0, 0, 0, -1, 2, 0],
    [0, 0, -1, 0, 0, 0, 0, 2],
]

# id -> (dimension, min norm, number of minimal vectors)
EXPECTED = {"a2": (2, 2, 6), "d4": (4, 2, 24), "e8": (8, 2, 240), "leech": (24, 4, 196560), "d9plus": (9, 2, 144)}


@dataclass
class CatalogEntry:
    id: str
    form: PeriodicForm
    notes: str

    @property
    def dim(self) -> int:
        return self.form.dim


def _d9_basis() -> list[list[int]]:
    # rows e_i - e_{i+1} (i < 8) and e_8 + e_9
    rows = []
    for i in range(8):
        r = [0] * 9
        r[i], r[i + 1] = 1, -1
        rows.append(r)
    r = [0] * 9
    r[7], r[8] = 1, 1
    rows.append(r)
    return rows


def _d9plus() -> PeriodicForm:
    b = _d9_basis()
    gram = [[sum(x * y for x, y in zip(u, v)) for v in b] for u in b]
    # glue (1/2, ..., 1/2) in basis coordinates: solve x B = g
    bt_inv = frac_inverse([[Fraction(b[j][i]) for j in range(9)] for i in range(9)])
    glue = [sum(bt_inv[i][k] * Fraction(1, 2) for k in range(9)) for i in range(9)]
    return PeriodicForm(QuadForm(gram), [[0] * 9, glue])


def _zd(d: int) -> PeriodicForm:
    return PeriodicForm(QuadForm([[int(i == j) for j in range(d)] for i in range(d)]))


@lru_cache(maxsize=None)
def _leech_gram() -> tuple:
    text = resources.files("lattice_energy").joinpath("data/leech.json").read_text()
    return tuple(tuple(r) for r in json.loads(text)["gram"])


def catalog_ids() -> list[str]:
    return ["zd:<d>", "a2", "d4", "e8", "leech", "d9plus"]


def load_entry(lattice_id: str) -> CatalogEntry:
    key = lattice_id.strip().lower()
    if key.startswith("zd:"):
        try:
            d = int(key[3:])
        except ValueError:
            raise UnknownLattice(f"bad dimension in {lattice_id!r}") from None
        if d < 1:
            raise UnknownLattice(f"bad dimension in {lattice_id!r}")
        return CatalogEntry(key, _zd(d), "integer lattice Z^d")
    if key == "a2":
        entry = CatalogEntry(key, PeriodicForm(QuadForm(A2)), "hexagonal lattice, root Gram")
    elif key == "d4":
        entry = CatalogEntry(key, PeriodicForm(QuadForm(D4)), "D4 root lattice, Cartan Gram")
    elif key == "e8":
        entry = CatalogEntry(key, PeriodicForm(QuadForm(E8)), "E8 root lattice, Cartan Gram")
    elif key == "leech":
        entry = CatalogEntry(key, PeriodicForm(QuadForm([list(r) for r in _leech_gram()])),
                             "Leech lattice from the extended Golay code, LLL reduced, minimum 4")
    elif key == "d9plus":
        entry = CatalogEntry(key, _d9plus(), "D9 with glue (1/2,...,1/2), two cosets")
    else:
        raise UnknownLattice(f"unknown lattice id {lattice_id!r}; known: {', '.join(catalog_ids())}")
    if os.environ.get("LATTICE_ENERGY_DEBUG") and key != "leech":
        _verify(entry)
    return entry


def load_catalog(lattice_id: str) -> PeriodicForm:
    """Exact form for a catalog id: zd:<d>, a2, d4, e8, leech or d9plus."""
    return load_entry(lattice_id).form


def _verify(entry: CatalogEntry) -> None:
    from .enumeration import enumerate_shells

    exp = EXPECTED.get(entry.id)
    if exp is None or entry.form.m != 1:
        return
    d, mu, n = exp
    first = enumerate_shells(entry.form.q, mu)
    if entry.dim != d or not first or first[0].alpha != mu or first[0].count != n:
        raise AssertionError(f"catalog entry {entry.id} does not have the expected first shell")
