"""Utility and privacy checks for a synthetic dataset against its source:
permutation tests on means and covariances, a nearest-neighbour privacy
audit, hexagonal visit heatmaps and descriptive statistics."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from fdasynth.elastic import _map, combined_distance, cross_distances, distance_matrix, to_srvf, trapz_weights
from fdasynth.errors import ValidationError
from fdasynth.karcher import unweighted_mean

DEFAULT_DIAGONAL_KM = math.sqrt(3.0) / 3.0


@dataclass
class PermutationTestResult:
    statistic_observed: float
    statistic_null: list
    p_value: float
    permutations: int
    seed: int
    name: str = ""

    def to_json(self):
        return {"name": self.name, "statistic_observed": self.statistic_observed,
                "statistic_null": list(self.statistic_null), "p_value": self.p_value,
                "permutations": self.permutations, "seed": self.seed}


def p_value(observed, null):
    null = np.asarray(null, dtype=float)
    return float((np.count_nonzero(null >= observed) + 1) / (null.size + 1))


def _perm_rng(seed, b):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(b,))))


def _permutation_test(pool, n_a, statistic, n_perm, seed, name, jobs):
    if n_perm < 1:
        raise ValidationError("n_perm must be >= 1")
    n = len(pool)
    observed = float(statistic(list(range(n_a)), list(range(n_a, n))))

    def one(b):
        perm = _perm_rng(seed, b).permutation(n)
        return float(statistic(sorted(perm[:n_a].tolist()), sorted(perm[n_a:].tolist())))

    null = _map(one, range(n_perm), jobs)
    return PermutationTestResult(observed, null, p_value(observed, null), n_perm, int(seed), name)


def _check_pair(orig, synth):
    if len(orig) == 0 or len(synth) == 0:
        raise ValidationError("both datasets must be nonempty")
    if orig.grid.m != synth.grid.m:
        raise ValidationError(f"grid mismatch: {orig.grid.m} vs {synth.grid.m}")


def mean_permutation_test(orig, synth, n_perm=500, delta=1.0, seed=42, karcher_tol=1e-4,
                          karcher_max_iter=20, jobs=1):
    """Elastic distance between the two Karcher means, against its
    label-shuffling null."""
    _check_pair(orig, synth)
    pool = [to_srvf(c.values) for c in orig.curves] + [to_srvf(c.values) for c in synth.curves]

    def stat(a, b):
        mu_a = unweighted_mean([pool[i] for i in a], karcher_tol, karcher_max_iter).mean_srvf
        mu_b = unweighted_mean([pool[i] for i in b], karcher_tol, karcher_max_iter).mean_srvf
        return combined_distance(mu_a, mu_b, delta)

    return _permutation_test(pool, len(orig), stat, n_perm, seed, "mean", jobs)


@dataclass
class CovarianceOperator:
    """Sample covariance of vectorized curves with quadrature weights folded in,
    so the Frobenius norm of a difference is the Hilbert-Schmidt distance."""

    matrix: np.ndarray

    @staticmethod
    def weighted_rows(values):
        values = np.asarray(values, dtype=float)  # (n, m, p)
        n, m, p = values.shape
        sw = np.sqrt(trapz_weights(m))
        return (values * sw[None, :, None]).reshape(n, m * p)

    @classmethod
    def from_values(cls, values):
        x = cls.weighted_rows(values)
        if x.shape[0] < 2:
            raise ValidationError("a covariance needs at least 2 curves")
        xc = x - x.mean(axis=0)
        return cls(xc.T @ xc / (x.shape[0] - 1))

    def hs_distance(self, other):
        return float(np.linalg.norm(self.matrix - other.matrix))


def _hs_from_rows(xa, xb):
    """Hilbert-Schmidt distance between sample covariances via n x n Gram blocks."""
    ca = xa - xa.mean(axis=0)
    cb = xb - xb.mean(axis=0)
    sa, sb = ca.shape[0] - 1, cb.shape[0] - 1
    aa = np.sum((ca @ ca.T) ** 2) / sa**2
    bb = np.sum((cb @ cb.T) ** 2) / sb**2
    ab = np.sum((ca @ cb.T) ** 2) / (sa * sb)
    return math.sqrt(max(aa + bb - 2.0 * ab, 0.0))


def covariance_permutation_test(orig, synth, n_perm=500, metric="hilbert-schmidt", seed=42, jobs=1):
    """Hilbert-Schmidt distance between covariance operators, each sample
    centred on its own mean, against its label-shuffling null."""
    _check_pair(orig, synth)
    if metric != "hilbert-schmidt":
        raise ValidationError(f"unsupported covariance metric {metric!r}")
    if len(orig) < 2 or len(synth) < 2:
        raise ValidationError("covariance test needs at least 2 curves per dataset")
    rows = CovarianceOperator.weighted_rows(np.concatenate([orig.values(), synth.values()]))
    stat = lambda a, b: _hs_from_rows(rows[a], rows[b])  # noqa: E731
    return _permutation_test(rows, len(orig), stat, n_perm, seed, "cov", jobs)


@dataclass
class PrivacyAudit:
    nn_orig_orig: np.ndarray
    nn_synth_orig: np.ndarray
    median_orig_orig: float
    median_synth_orig: float
    ratio: float

    @property
    def passed(self):
        return self.ratio >= 1.0

    def to_json(self):
        return {"nn_orig_orig": self.nn_orig_orig.tolist(), "nn_synth_orig": self.nn_synth_orig.tolist(),
                "median_orig_orig": self.median_orig_orig, "median_synth_orig": self.median_synth_orig,
                "ratio": self.ratio, "passed": self.passed}


def privacy_audit(orig, synth, delta=1.0, orig_dist=None, cross=None, jobs=1):
    """Nearest-original distance for every synthetic curve versus nearest
    distinct-original distance for every original.

    ``orig_dist`` (n x n combined) and ``cross`` (n_synth x n) skip recomputation.
    """
    _check_pair(orig, synth)
    if len(orig) < 2:
        raise ValidationError("privacy audit needs at least 2 original curves")
    qo = [to_srvf(c.values) for c in orig.curves]
    if orig_dist is None:
        orig_dist = distance_matrix(qo, delta, jobs).combined
    if cross is None:
        cross = cross_distances([to_srvf(c.values) for c in synth.curves], qo, delta, jobs)
    d = np.array(orig_dist, dtype=float)
    np.fill_diagonal(d, np.inf)
    nn_oo = d.min(axis=1)
    nn_so = np.asarray(cross, dtype=float).min(axis=1)
    mo, ms = float(np.median(nn_oo)), float(np.median(nn_so))
    ratio = ms / mo if mo > 0 else (math.inf if ms > 0 else 0.0)
    return PrivacyAudit(nn_oo, nn_so, mo, ms, ratio)


@dataclass
class HexHeatmap:
    cell_diagonal: float  # km
    counts: dict  # (q, r) axial -> count
    total: int
    anchor: tuple = (0.0, 0.0)

    def center(self, q, r):
        """Planar centre in meters of the flat-top cell (q, r)."""
        size = self.cell_diagonal * 500.0
        return (self.anchor[0] + size * 1.5 * q,
                self.anchor[1] + size * math.sqrt(3.0) * (r + q / 2.0))

    def rows(self):
        out = []
        for (q, r), c in sorted(self.counts.items()):
            x, y = self.center(q, r)
            out.append((q, r, x, y, c))
        return out


def _axial_round(qf, rf):
    # cube rounding: fix the component with the largest rounding error
    sf = -qf - rf
    q, r, s = np.round(qf), np.round(rf), np.round(sf)
    dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(int), r.astype(int)


def hex_bin(x, y, cell_diagonal_km, anchor):
    """Axial coordinates of flat-top hexagons with the given long diagonal."""
    size = cell_diagonal_km * 500.0  # circumradius in meters
    px = (np.asarray(x, float) - anchor[0]) / size
    py = (np.asarray(y, float) - anchor[1]) / size
    return _axial_round(2.0 / 3.0 * px, -px / 3.0 + math.sqrt(3.0) / 3.0 * py)


def resample(values, n):
    values = np.asarray(values, dtype=float)
    src = np.linspace(0.0, 1.0, values.shape[0])
    dst = np.linspace(0.0, 1.0, n)
    return np.column_stack([np.interp(dst, src, values[:, j]) for j in range(values.shape[1])])


def _planar_points(dataset, normalization, samples):
    pts = [resample(c.values, samples) for c in dataset.curves]
    if not pts:
        return np.empty(0), np.empty(0)
    allp = np.concatenate(pts)
    x, y, _ = normalization.inverse(allp[:, 0], allp[:, 1], allp[:, 2])
    return x, y


def hex_heatmap(dataset, normalization, cell_diagonal_km=DEFAULT_DIAGONAL_KM, samples_per_curve=25,
                anchor=None):
    """Visit counts per hexagonal cell; cells are anchored at the point centroid
    unless an explicit planar ``anchor`` is given (share it to compare datasets)."""
    if normalization is None:
        raise ValidationError("heatmap needs normalization parameters")
    if not cell_diagonal_km > 0 or samples_per_curve < 1:
        raise ValidationError("cell diagonal and samples per curve must be positive")
    x, y = _planar_points(dataset, normalization, samples_per_curve)
    if anchor is None:
        anchor = (float(x.mean()), float(y.mean())) if x.size else (0.0, 0.0)
    q, r = hex_bin(x, y, cell_diagonal_km, anchor)
    counts = Counter(zip(q.tolist(), r.tolist()))
    return HexHeatmap(cell_diagonal_km, dict(counts), int(x.size), tuple(anchor))


FEATURES = ("distance_km", "duration_min")


def feature_stats(dataset, normalization):
    """Per-curve travel distance and duration, summarized by min/max/mean/sd."""
    if len(dataset) == 0:
        return {"n_curves": 0, "features": {}}
    if normalization is None:
        raise ValidationError("feature statistics need normalization parameters")
    dist, dur = [], []
    for c in dataset.curves:
        x, y, t = normalization.inverse(c.values[:, 0], c.values[:, 1], c.values[:, 2])
        dist.append(float(np.sum(np.hypot(np.diff(x), np.diff(y)))) / 1000.0)
        dur.append(float(t[-1] - t[0]) / 60.0)
    table = {}
    for name, v in zip(FEATURES, (np.array(dist), np.array(dur))):
        table[name] = {"min": float(v.min()), "max": float(v.max()), "mean": float(v.mean()),
                       "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0}
    return {"n_curves": len(dataset), "features": table}
