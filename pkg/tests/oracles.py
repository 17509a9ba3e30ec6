"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import math

import numpy as np


def segment_cost(q1, q2, k, l, di, dj):
    """Loop version of the straight-move residual, no Gram expansion."""
    m = q1.shape[0]
    h = 1.0 / (m - 1)
    slope = dj / di
    total = 0.0
    for r in range(di + 1):
        pos = l + r * slope
        lo = min(int(math.floor(pos)), m - 1)
        frac = pos - lo
        if lo == m - 1:
            v = q2[lo]
        else:
            v = (1.0 - frac) * q2[lo] + frac * q2[lo + 1]
        w = 0.5 if r in (0, di) else 1.0
        diff = q1[k + r] - math.sqrt(slope) * v
        total += w * float(diff @ diff)
    return h * total


def _reachable(m, steps):
    """ok[a, b]: an offset (a, b) to the corner is a sum of steps."""
    ok = np.zeros((m, m), dtype=bool)
    ok[0, 0] = True
    for a in range(m):
        for b in range(m):
            if not ok[a, b]:
                ok[a, b] = any(a >= di and b >= dj and ok[a - di, b - dj] for di, dj in steps)
    return ok


class PathTree:
    """Every monotone lattice path from (0, 0) to (m-1, m-1), stored as a
    prefix tree built level by level (level = number of moves).

    Each node is one distinct path prefix, so accumulating cost per node and
    taking the minimum over terminal nodes is exhaustive enumeration: no two
    paths share a node unless they share the whole prefix.
    """

    def __init__(self, m, steps):
        self.m = m
        self.steps = np.array([tuple(int(v) for v in s) for s in steps])
        ok = _reachable(m, [tuple(s) for s in self.steps])
        end = m - 1
        self.levels = []  # (parent, i, j, step) per level
        fi, fj = np.array([0]), np.array([0])
        while fi.size:
            par, ci, cj, cs = [], [], [], []
            for s, (di, dj) in enumerate(self.steps):
                a, b = fi + di, fj + dj
                keep = (a <= end) & (b <= end)
                keep[keep] = ok[end - a[keep], end - b[keep]]
                idx = np.flatnonzero(keep)
                par.append(idx)
                ci.append(a[idx])
                cj.append(b[idx])
                cs.append(np.full(idx.size, s))
            lvl = tuple(np.concatenate(v) for v in (par, ci, cj, cs))
            if lvl[0].size == 0:
                break
            self.levels.append((lvl[0], fi[lvl[0]], fj[lvl[0]], lvl[3], lvl[1], lvl[2]))
            fi, fj = lvl[1], lvl[2]

    @property
    def n_paths(self):
        end = self.m - 1
        return int(sum(np.count_nonzero((ci == end) & (cj == end))
                       for _, _, _, _, ci, cj in self.levels))

    def min_cost(self, q1, q2):
        m, end = self.m, self.m - 1
        table = np.full((m, m, len(self.steps)), np.nan)
        for k, (di, dj) in enumerate(self.steps):
            for i in range(m - di):
                for j in range(m - dj):
                    table[i, j, k] = segment_cost(q1, q2, i, j, di, dj)
        best = np.inf
        total = np.zeros(1)
        for pi, fi, fj, s, ci, cj in self.levels:
            total = total[pi] + table[fi, fj, s]
            done = (ci == end) & (cj == end)
            if done.any():
                best = min(best, float(total[done].min()))
        return best


def natural_spline(xs, ys, x_eval):
    """Natural cubic spline by a direct tridiagonal solve for the knot second derivatives."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    n = len(xs)
    h = np.diff(xs)
    a = np.zeros((n, n))
    rhs = np.zeros(n)
    a[0, 0] = a[-1, -1] = 1.0
    for i in range(1, n - 1):
        a[i, i - 1] = h[i - 1]
        a[i, i] = 2.0 * (h[i - 1] + h[i])
        a[i, i + 1] = h[i]
        rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1])
    mm = np.linalg.solve(a, rhs)
    out = []
    for x in np.atleast_1d(x_eval):
        k = min(max(int(np.searchsorted(xs, x, side="right")) - 1, 0), n - 2)
        t0, t1 = xs[k + 1] - x, x - xs[k]
        out.append(mm[k] * t0**3 / (6 * h[k]) + mm[k + 1] * t1**3 / (6 * h[k])
                   + (ys[k] / h[k] - mm[k] * h[k] / 6) * t0
                   + (ys[k + 1] / h[k] - mm[k + 1] * h[k] / 6) * t1)
    return np.array(out)


def haversine_m(lat1, lon1, lat2, lon2, radius=6371000.0):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    s = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(s))


def silhouette(dist, labels):
    """Mean silhouette width from a precomputed distance matrix."""
    dist, labels = np.asarray(dist, float), np.asarray(labels)
    out = []
    for i in range(len(labels)):
        same = (labels == labels[i])
        same[i] = False
        if not same.any():
            out.append(0.0)
            continue
        a = dist[i, same].mean()
        b = min(dist[i, labels == g].mean() for g in set(labels.tolist()) if g != labels[i])
        out.append((b - a) / max(a, b))
    return float(np.mean(out))


def adjusted_rand(a, b):
    """Adjusted Rand index from the contingency table."""
    from math import comb
    a, b = np.asarray(a), np.asarray(b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(ua), len(ub)), dtype=int)
    np.add.at(table, (ia, ib), 1)
    s_ij = sum(comb(int(v), 2) for v in table.ravel())
    s_a = sum(comb(int(v), 2) for v in table.sum(1))
    s_b = sum(comb(int(v), 2) for v in table.sum(0))
    total = comb(len(a), 2)
    expected = s_a * s_b / total
    top = 0.5 * (s_a + s_b)
    return 1.0 if top == expected else (s_ij - expected) / (top - expected)
