"""Weighted Karcher (Frechet) means of curves in SRVF space."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fdasynth.elastic import _as2d, _map, _restore, align, identity_warping, inner

WEIGHT_TOL = 1e-12


@dataclass
class KarcherResult:
    mean_srvf: np.ndarray
    warpings: list
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _validate(srvfs, weights):
    if len(srvfs) == 0:
        raise ValueError("weighted Karcher mean of an empty set")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(srvfs),):
        raise ValueError(f"expected {len(srvfs)} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1 (sum = {w.sum()!r})")
    return w


def _align_all(mu, srvfs, weights, active, jobs):
    m = mu.shape[0]
    res = _map(lambda k: align(mu, srvfs[k]), active, jobs)
    aligned = {k: r for k, r in zip(active, res)}
    warpings = [aligned[k].gamma if k in aligned else identity_warping(m)
                for k in range(len(srvfs))]
    objective = 0.0
    for k in active:
        diff = mu - aligned[k].aligned
        objective += weights[k] * inner(diff, diff)
    return aligned, warpings, objective


def weighted_karcher_mean(srvfs, weights, tol=1e-4, max_iter=20, ids=None, jobs=1):
    """Alternating-minimization Karcher mean.

    Starts from the weighted extrinsic average, then repeatedly aligns every
    input onto the current mean and re-averages the aligned SRVFs. A step that
    would raise the objective (possible because alignment is only lattice
    optimal) is rejected and iteration stops, so the trace never increases.

    ``ids`` fixes the summation order: inputs are processed sorted by id,
    which makes the result invariant to how the caller ordered them.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = _validate(srvfs, weights)
    like = srvfs[0]
    qs = [np.ascontiguousarray(_as2d(q)) for q in srvfs]
    order = list(range(len(qs))) if ids is None else sorted(range(len(qs)), key=lambda k: ids[k])
    active = [k for k in order if w[k] > 0.0]

    mu = np.zeros_like(qs[0])
    for k in active:
        mu = mu + w[k] * qs[k]
    aligned, warpings, obj = _align_all(mu, qs, w, active, jobs)
    result = KarcherResult(mean_srvf=mu, warpings=warpings, objective_trace=[obj])
    if len(active) == 1:
        # a single effective input is its own mean
        k = active[0]
        result.mean_srvf = qs[k].copy()
        result.objective_trace = [0.0]
        result.converged = True
        result.mean_srvf = _restore(result.mean_srvf, like)
        return result

    for it in range(1, max_iter + 1):
        cand = np.zeros_like(mu)
        for k in active:
            cand = cand + w[k] * aligned[k].aligned
        c_aligned, c_warpings, c_obj = _align_all(cand, qs, w, active, jobs)
        if c_obj > obj:
            result.converged = True
            break
        decrease = (obj - c_obj) / obj if obj > 0 else 0.0
        mu, aligned, warpings, obj = cand, c_aligned, c_warpings, c_obj
        result.mean_srvf, result.warpings = mu, warpings
        result.objective_trace.append(obj)
        result.iterations = it
        if decrease < tol:
            result.converged = True
            break
    result.mean_srvf = _restore(result.mean_srvf, like)
    return result


def unweighted_mean(srvfs, tol=1e-4, max_iter=20, ids=None, jobs=1):
    """Karcher mean with uniform weights 1/N."""
    n = len(srvfs)
    if n == 0:
        raise ValueError("unweighted mean of an empty dataset")
    w = np.full(n, 1.0 / n)
    w[-1] = 1.0 - w[:-1].sum()
    return weighted_karcher_mean(srvfs, w, tol=tol, max_iter=max_iter, ids=ids, jobs=jobs)
