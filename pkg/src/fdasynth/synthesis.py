"""Synthetic twins: Dirichlet-weighted Karcher means of nearest neighbours."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from fdasynth.elastic import _map, from_srvf, to_srvf
from fdasynth.errors import ValidationError
from fdasynth.functional import Curve, CurveDataset
from fdasynth.karcher import weighted_karcher_mean

log = logging.getLogger(__name__)

KERNELS = ("exp", "hyp", "exp-scaled")
CLAMP_REPORT_TOL = 1e-6


@dataclass(frozen=True)
class SynthesisConfig:
    k: int = 6
    alpha0: float = 7.0
    kernel: str = "exp"
    beta0: float = 1.0
    delta: float = 1.0
    seed: int = 42
    karcher_tol: float = 1e-4
    karcher_max_iter: int = 20

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.alpha0 < 1:
            raise ValidationError(f"alpha0 must be >= 1, got {self.alpha0}")
        if self.kernel not in KERNELS:
            raise ValidationError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if self.kernel == "exp-scaled" and not self.beta0 > 0:
            raise ValidationError("beta0 must be > 0 for the exp-scaled kernel")

    def to_dict(self):
        return dict(k=self.k, alpha0=self.alpha0, kernel=self.kernel, beta0=self.beta0,
                    delta=self.delta, seed=self.seed, karcher_tol=self.karcher_tol,
                    karcher_max_iter=self.karcher_max_iter)


@dataclass
class NeighborWeights:
    reference_id: str
    neighbor_ids: list
    distances: np.ndarray
    alphas: np.ndarray
    weights: np.ndarray
    uniform_fallback: bool = False


@dataclass
class SynthesisReport:
    config: dict
    neighbors: list = field(default_factory=list)
    karcher_iterations: list = field(default_factory=list)
    clamp_max: list = field(default_factory=list)
    seconds: float = 0.0

    def to_json(self, include_timing=False):
        out = {
            "config": self.config,
            "curves": [
                {"reference_id": nw.reference_id, "neighbor_ids": nw.neighbor_ids,
                 "distances": nw.distances.tolist(), "alphas": nw.alphas.tolist(),
                 "weights": nw.weights.tolist(), "uniform_fallback": nw.uniform_fallback,
                 "karcher_iterations": it, "time_clamp": cl}
                for nw, it, cl in zip(self.neighbors, self.karcher_iterations, self.clamp_max)
            ],
        }
        if include_timing:
            out["seconds"] = self.seconds
        return out


def nearest_neighbors(dist, i, k):
    """The k nearest other curves to curve i; ties go to the lower index."""
    dist = np.asarray(dist)
    n = dist.shape[0]
    if k >= n:
        raise ValidationError(f"k={k} needs at least {k + 1} curves, have {n}")
    others = np.array([j for j in range(n) if j != i])
    order = np.lexsort((others, dist[i, others]))
    ids = others[order[:k]]
    return ids, dist[i, ids]


def kernel_fn(name="exp", beta0=1.0):
    if name == "exp":
        return lambda d: np.exp(-d)
    if name == "hyp":
        return lambda d: 1.0 / (1.0 + d)
    if name == "exp-scaled":
        return lambda d: np.exp(-beta0 * d)
    raise ValidationError(f"unknown kernel {name!r}")


def dirichlet_parameters(distances, alpha0, kernel="exp", beta0=1.0):
    """Concentrations alpha_k = alpha0 g(d_k) / sum g(d_n), summing to alpha0.

    Returns ``(alphas, fell_back)``; if every g(d_k) underflows the
    concentrations are uniform and ``fell_back`` is True.
    """
    d = np.asarray(distances, dtype=float)
    if np.any(d < 0):
        raise ValidationError("distances must be non-negative")
    if alpha0 < 1:
        raise ValidationError(f"alpha0 must be >= 1, got {alpha0}")
    g = kernel_fn(kernel, beta0)(d)
    total = g.sum()
    if not total > 0 or not np.isfinite(total):
        return np.full(len(d), alpha0 / len(d)), True
    alphas = alpha0 * (g / total)
    return alphas * (alpha0 / alphas.sum()), False


def sample_dirichlet(alphas, rng):
    """One Dirichlet draw via normalized Gamma(alpha_k, 1) variates."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0):
        raise ValidationError("Dirichlet concentrations must be positive")
    if len(alphas) == 1:
        return np.ones(1)
    g = rng.standard_gamma(alphas)
    total = g.sum()
    if total == 0.0:  # every variate underflowed; only reachable with tiny alphas
        g = np.zeros_like(alphas)
        g[np.argmax(alphas)] = 1.0
        total = 1.0
    p = g / total
    # push the roundoff residue onto the largest weight so sum(p) == 1
    p[np.argmax(p)] += 1.0 - p.sum()
    return p


def curve_rng(seed, index):
    """Independent generator for curve ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def synthesize_one(dataset, dist, i, config, rng=None, srvfs=None):
    """Synthetic twin of curve i. Returns ``(curve, neighbor_weights, karcher_result, clamp)``."""
    rng = curve_rng(config.seed, i) if rng is None else rng
    ref = dataset.curves[i]
    ids, d = nearest_neighbors(dist, i, config.k)
    alphas, fell_back = dirichlet_parameters(d, config.alpha0, config.kernel, config.beta0)
    p = sample_dirichlet(alphas, rng)
    nbrs = [dataset.curves[j] for j in ids]
    start = np.zeros(nbrs[0].values.shape[1])
    for w, c in zip(p, nbrs):
        start = start + w * c.values[0]
    qs = [srvfs[j] if srvfs is not None else to_srvf(c.values) for j, c in zip(ids, nbrs)]
    km = weighted_karcher_mean(qs, p, tol=config.karcher_tol, max_iter=config.karcher_max_iter)
    values = from_srvf(km.mean_srvf, start)
    clamp = 0.0
    if values.shape[1] >= 3:
        t = values[:, 2]
        fixed = np.maximum.accumulate(t)
        clamp = float(np.max(fixed - t))
        values[:, 2] = fixed
    nw = NeighborWeights(ref.id, [dataset.curves[j].id for j in ids], d, alphas, p, fell_back)
    curve = Curve(f"{ref.id}-s", values, source_id="synthetic", grid=dataset.grid)
    return curve, nw, km, clamp


def synthesize_all(dataset, dist, config, jobs=1, srvfs=None):
    """One synthetic curve per original, each drawn from its own RNG substream."""
    dist = np.asarray(dist)
    n = len(dataset)
    if dist.shape != (n, n):
        raise ValidationError(f"distance matrix is {dist.shape}, dataset has {n} curves")
    if config.k >= n:
        raise ValidationError(f"k={config.k} must be smaller than the dataset size {n}")
    if srvfs is None:
        srvfs = [to_srvf(c.values) for c in dataset.curves]
    t0 = time.perf_counter()

    def one(i):
        try:
            return synthesize_one(dataset, dist, i, config, srvfs=srvfs)
        except ValidationError as exc:
            raise ValidationError(f"curve {dataset.curves[i].id!r}: {exc}") from exc

    results = _map(one, range(n), jobs)
    report = SynthesisReport(config=config.to_dict())
    curves = []
    for curve, nw, km, clamp in results:
        curves.append(curve)
        report.neighbors.append(nw)
        report.karcher_iterations.append(km.iterations)
        report.clamp_max.append(clamp)
    report.seconds = time.perf_counter() - t0
    for nw, clamp in zip(report.neighbors, report.clamp_max):
        if clamp > CLAMP_REPORT_TOL:
            log.warning("synthetic twin of %r: elapsed time clamped by %.3g", nw.reference_id, clamp)
    meta = {"synthetic": True, "config": config.to_dict(),
            "clamped_curves": int(sum(c > CLAMP_REPORT_TOL for c in report.clamp_max))}
    return CurveDataset(curves, dataset.grid, dataset.normalization, meta), report
