"""Precomputation shared by both alignment backends.

The segment cost of a straight lattice move (k, l) -> (k + di, l + dj) is the
trapezoid-weighted squared residual

    h * sum_r w_r |q1[k + r] - sqrt(dj/di) * q2(l + r dj/di)|^2,

expanded into a q1 part (depends on k), a q2 part (depends on l) and a cross
term read from the Gram matrix ``q1 @ q2.T``. Both backends evaluate the cross
term in the same order so their results agree bit for bit.
"""
from functools import lru_cache

import numpy as np


def step_offsets(di, dj):
    """(offset, fraction, weight) of each sample along a move."""
    out = []
    for r in range(di + 1):
        off = dj * r
        out.append((off // di, (off % di) / di, 0.5 if r == 0 or r == di else 1.0))
    return out


@lru_cache(maxsize=16)
def step_tables(steps, m):
    """Flattened per-sample tables for a step set, cached per grid size.

    Returns ``(start, r, a, f, w, row_mask)`` where samples of step ``s``
    occupy ``start[s]:start[s + 1]`` and ``row_mask[t, l]`` is 1 where move
    ``s`` can leave column ``l``.
    """
    start = [0]
    rs, as_, fs, ws, lim = [], [], [], [], []
    for di, dj in steps:
        for r, (a, f, w) in enumerate(step_offsets(di, dj)):
            rs.append(r)
            as_.append(a)
            fs.append(f)
            ws.append(w)
            lim.append(m - dj)
        start.append(len(rs))
    a = np.asarray(as_, dtype=np.intp)
    cols = np.arange(m)[None, :] + a[:, None]
    mask = np.arange(m)[None, :] < np.asarray(lim)[:, None]
    cols0 = np.where(mask, cols, 0)
    cols1 = np.where(mask, np.minimum(cols + 1, m - 1), 0)
    return (np.asarray(start, dtype=np.intp), np.asarray(rs, dtype=np.intp), a,
            np.asarray(fs), np.asarray(ws), mask, cols0, cols1)


def prepare(q1, q2, steps):
    """Return ``(gram, q1_tab, q2_tab)`` for the DP recursion.

    ``q1_tab[di, k]`` is the weighted sum of |q1|^2 along a move of length di
    leaving row k; ``q2_tab[s, l]`` the weighted sum of the squared scaled,
    interpolated q2 along move s leaving column l.
    """
    m = q1.shape[0]
    steps = tuple((int(di), int(dj)) for di, dj in steps)
    start, rs, _, fs, ws, mask, cols0, cols1 = step_tables(steps, m)
    gram = np.ascontiguousarray(q1 @ q2.T)
    n1 = np.einsum("ij,ij->i", q1, q1)
    n2 = np.einsum("ij,ij->i", q2, q2)
    c2 = np.zeros(m)
    c2[:-1] = np.einsum("ij,ij->i", q2[:-1], q2[1:])

    f = fs[:, None]
    sq = ((1.0 - f) * (1.0 - f)) * n2[cols0] + (2.0 * f * (1.0 - f)) * c2[cols0] \
        + (f * f) * n2[cols1]
    sq = np.where(mask, sq * ws[:, None], 0.0)
    slopes = np.array([dj / di for di, dj in steps])
    q2_tab = slopes[:, None] * np.add.reduceat(sq, start[:-1], axis=0)

    max_di = max(di for di, _ in steps)
    q1_tab = np.zeros((max_di + 1, m))
    for di in sorted({di for di, _ in steps}):
        nk = m - di
        if nk <= 0:
            continue
        acc = np.zeros(nk)
        for r in range(di + 1):
            acc = acc + (0.5 if r == 0 or r == di else 1.0) * n1[r:r + nk]
        q1_tab[di, :nk] = acc
    return gram, q1_tab, q2_tab
