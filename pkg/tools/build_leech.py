"""Build the Leech lattice Gram matrix (scaled to minimum norm 4) from the extended Golay code."""

import itertools
import json
import sys
from pathlib import Path

import numpy as np
from sympy import Matrix
from sympy.polys.domains import ZZ
from sympy.polys.matrices import DomainMatrix

QR = {(i * i) % 23 for i in range(1, 23)}


def golay_basis():
    v = [1 if i in QR else 0 for i in range(23)]
    rows = []
    for k in range(23):
        w = v[-k:] + v[:-k] if k else v[:]
        rows.append(w + [sum(w) % 2])
    # keep an independent subset over GF(2)
    basis, piv = [], []
    for r in rows:
        r = r[:]
        for b, p in zip(basis, piv):
            if r[p]:
                r = [(x + y) % 2 for x, y in zip(r, b)]
        if any(r):
            basis.append(r)
            piv.append(r.index(1))
    return basis


def main(out):
    basis = golay_basis()
    assert len(basis) == 12
    words = {tuple(sum(c * np.array(b) for c, b in zip(cs, basis)) % 2)
             for cs in itertools.product([0, 1], repeat=12)}
    weights = sorted({sum(w) for w in words})
    assert weights == [0, 8, 12, 16, 24], weights
    gens = [[2 * x for x in b] for b in basis]
    for i in range(24):
        for j in range(i + 1, 24):
            for s in (1, -1):
                r = [0] * 24
                r[i], r[j] = 4, 4 * s
                gens.append(r)
    gens.append([-3] + [1] * 23)
    hnf = Matrix(gens).T.echelon_form()  # only used for rank check
    assert hnf.rank() == 24
    from lattice_energy.enumeration import hnf_rows
    b = hnf_rows(gens)
    b = DomainMatrix([[ZZ(x) for x in row] for row in b], (24, 24), ZZ).lll()
    b = np.array(b.to_Matrix().tolist(), dtype=np.int64)
    g = b @ b.T
    assert np.all(g % 8 == 0)
    g //= 8
    assert round(np.linalg.det(g.astype(float))) == 1
    assert np.all(np.diag(g) % 2 == 0)
    Path(out).write_text(json.dumps({"gram": g.tolist(), "notes": "extended Golay code construction, LLL reduced, minimum norm 4"}) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/lattice_energy/data/leech.json")
