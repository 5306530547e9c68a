"""Compiled Fincke-Pohst walk over the integer points of a shifted lattice."""

import numba
import numpy as np


@numba.njit(cache=True)
def _walk(r, offset, bound, lower, out, fill, top_lo, top_hi, per_top):
    # r: upper triangular factor, Q = r^T r.  Visits z in Z^d with
    # lower <= Q[offset + z] <= bound and top_lo <= z[d-1] <= top_hi; writes z
    # into out when fill is True and counts hits per z[d-1] - top_lo in per_top.
    d = r.shape[0]
    z = np.zeros(d, dtype=np.int64)
    hi = np.zeros(d, dtype=np.int64)
    rem = np.zeros(d + 1)
    cen = np.zeros(d)
    rem[d - 1] = bound
    count = 0
    level = d - 1
    # set up top level
    cen[level] = 0.0
    rad = np.sqrt(max(rem[level], 0.0)) / r[level, level]
    z[level] = max(np.int64(np.ceil(cen[level] - rad - offset[level])), top_lo)
    hi[level] = min(np.int64(np.floor(cen[level] + rad - offset[level])), top_hi)
    while True:
        if z[level] > hi[level]:
            level += 1
            if level == d:
                break
            z[level] += 1
            continue
        v = offset[level] + z[level]
        delta = r[level, level] * (v - cen[level])
        left = rem[level] - delta * delta
        if level == 0:
            if left >= 0.0 and bound - left >= lower:
                if fill:
                    for k in range(d):
                        out[count, k] = z[k]
                else:
                    per_top[z[d - 1] - top_lo] += 1
                count += 1
            z[0] += 1
            continue
        if left < 0.0:
            z[level] += 1
            continue
        nxt = level - 1
        rem[nxt] = left
        s = 0.0
        for j in range(level, d):
            s += r[nxt, j] * (offset[j] + z[j])
        cen[nxt] = -s / r[nxt, nxt]
        rad = np.sqrt(rem[nxt]) / r[nxt, nxt]
        z[nxt] = np.int64(np.ceil(cen[nxt] - rad - offset[nxt]))
        hi[nxt] = np.int64(np.floor(cen[nxt] + rad - offset[nxt]))
        level = nxt
    return count


def _pad(bound: float, lower: float) -> tuple[float, float]:
    pad = bound * (1.0 + 1e-9) + 1e-12
    low = lower * (1.0 - 1e-9) - 1e-12 if lower > 0 else -1.0
    return pad, low


def top_range(factor: np.ndarray, offset: np.ndarray, bound: float) -> tuple[int, int]:
    """Range of the last integer coordinate over the padded ellipsoid."""
    pad, _ = _pad(bound, -1.0)
    rad = np.sqrt(max(pad, 0.0)) / factor[-1, -1]
    return int(np.ceil(-rad - offset[-1])), int(np.floor(rad - offset[-1]))


def slab_counts(factor: np.ndarray, offset: np.ndarray, bound: float) -> tuple[int, np.ndarray]:
    """(top_lo, counts) with counts[k] the number of points whose last coordinate is top_lo + k."""
    r = np.ascontiguousarray(factor, dtype=np.float64)
    off = np.ascontiguousarray(offset, dtype=np.float64)
    pad, low = _pad(bound, -1.0)
    lo, hi = top_range(r, off, bound)
    per_top = np.zeros(max(hi - lo + 1, 1), dtype=np.int64)
    dummy = np.zeros((1, r.shape[0]), dtype=np.int64)
    _walk(r, off, pad, low, dummy, False, lo, hi, per_top)
    return lo, per_top


def points_in_ellipsoid(
    factor: np.ndarray, offset: np.ndarray, bound: float, lower: float = -1.0, top=None, count=None
) -> np.ndarray:
    """All z with lower <= ||factor (offset + z)||^2 <= bound (slightly padded; callers filter).

    ``top`` restricts the last coordinate to an inclusive range; ``count``
    is the number of points if already known.
    """
    r = np.ascontiguousarray(factor, dtype=np.float64)
    off = np.ascontiguousarray(offset, dtype=np.float64)
    pad, low = _pad(bound, lower)
    lo, hi = top if top is not None else top_range(r, off, bound)
    dummy = np.zeros((1, r.shape[0]), dtype=np.int64)
    if count is None:
        per_top = np.zeros(max(hi - lo + 1, 1), dtype=np.int64)
        count = _walk(r, off, pad, low, dummy, False, lo, hi, per_top)
    out = np.empty((count, r.shape[0]), dtype=np.int64)
    if count:
        _walk(r, off, pad, low, out, True, lo, hi, dummy[0])
    return out
