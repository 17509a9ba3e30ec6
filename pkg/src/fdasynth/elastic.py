"""Square-root velocity machinery: transforms, warping action, optimal
alignment and the amplitude/phase distances built on it.

Every array here is sampled on the uniform grid ``linspace(0, 1, m)``. A
curve or SRVF is an ``(m,)`` or ``(m, p)`` array; 1-d inputs come back 1-d.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from fdasynth.kernels import dp_align

ZERO_SPEED = 1e-12


def _as2d(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _restore(out, like):
    return out[:, 0] if np.ndim(like) == 1 else out


def trapz_weights(m):
    """Trapezoidal quadrature weights on the uniform m-point grid of [0, 1]."""
    w = np.full(m, 1.0 / (m - 1))
    w[0] = w[-1] = 0.5 / (m - 1)
    return w


def inner(a, b):
    """L2 inner product of two sampled functions (summed over components)."""
    a2, b2 = _as2d(a), _as2d(b)
    return float(trapz_weights(a2.shape[0]) @ np.sum(a2 * b2, axis=1))


def l2_norm(a):
    return float(np.sqrt(max(inner(a, a), 0.0)))


def to_srvf(f):
    """SRVF q = f' / sqrt(|f'|), zero where the speed vanishes."""
    f2 = _as2d(f)
    m = f2.shape[0]
    df = np.gradient(f2, 1.0 / (m - 1), axis=0, edge_order=1)
    speed = np.linalg.norm(df, axis=1)
    q = np.zeros_like(df)
    moving = speed >= ZERO_SPEED
    q[moving] = df[moving] / np.sqrt(speed[moving])[:, None]
    return _restore(q, f)


def from_srvf(q, start):
    """Invert :func:`to_srvf`: f(x) = start + int_0^x q |q| dt (trapezoid)."""
    q2 = _as2d(q)
    m = q2.shape[0]
    vel = q2 * np.linalg.norm(q2, axis=1)[:, None]
    f = cumulative_trapezoid(vel, dx=1.0 / (m - 1), axis=0, initial=0.0)
    f += np.atleast_1d(np.asarray(start, dtype=float))[None, :]
    return _restore(f, q)


def identity_warping(m):
    return np.linspace(0.0, 1.0, m)


def warp_derivative(gamma):
    gamma = np.asarray(gamma, dtype=float)
    return np.gradient(gamma, 1.0 / (len(gamma) - 1), edge_order=1)


def warp_srvf(q, gamma):
    """Group action (q o gamma) * sqrt(gamma') with linear interpolation."""
    q2 = _as2d(q)
    m = q2.shape[0]
    x = np.linspace(0.0, 1.0, m)
    gamma = np.asarray(gamma, dtype=float)
    composed = np.column_stack([np.interp(gamma, x, q2[:, c]) for c in range(q2.shape[1])])
    root = np.sqrt(np.clip(warp_derivative(gamma), 0.0, None))
    return _restore(composed * root[:, None], q)


def warp_curve(f, gamma):
    """Reparameterize a sampled curve: f o gamma by linear interpolation."""
    f2 = _as2d(f)
    x = np.linspace(0.0, 1.0, f2.shape[0])
    out = np.column_stack([np.interp(gamma, x, f2[:, c]) for c in range(f2.shape[1])])
    return _restore(out, f)


@dataclass(frozen=True)
class Alignment:
    """Result of aligning ``q2`` onto ``q1``."""

    gamma: np.ndarray
    aligned: np.ndarray
    cost: float
    path: tuple


def align(q1, q2):
    """Find the lattice warping gamma minimizing |q1 - (q2 o gamma) sqrt(gamma')|.

    ``cost`` is the squared lattice objective minimized by the dynamic
    program; ``aligned`` is ``warp_srvf(q2, gamma)``.
    """
    a, b = _as2d(q1), _as2d(q2)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = a.shape[0]
    cost, pi, pj = dp_align(np.ascontiguousarray(a), np.ascontiguousarray(b))
    h = 1.0 / (m - 1)
    gamma = np.interp(np.linspace(0.0, 1.0, m), pi * h, pj * h)
    gamma[0], gamma[-1] = 0.0, 1.0
    aligned = warp_srvf(q2, gamma)
    return Alignment(gamma=gamma, aligned=aligned, cost=cost, path=(pi, pj))


def warping_phase(gamma):
    """Arc length on the Hilbert sphere between sqrt(gamma') and the identity."""
    psi = np.sqrt(np.clip(warp_derivative(gamma), 0.0, None))
    c = float(trapz_weights(len(psi)) @ psi)
    return float(np.arccos(min(max(c, 0.0), 1.0)))


def elastic_distances(q1, q2):
    """(amplitude, phase) distance pair from a single alignment of q2 onto q1."""
    al = align(q1, q2)
    return l2_norm(_as2d(q1) - _as2d(al.aligned)), warping_phase(al.gamma)


def amplitude_distance(q1, q2):
    return elastic_distances(q1, q2)[0]


def phase_distance(q1, q2):
    return elastic_distances(q1, q2)[1]


def combined_distance(q1, q2, delta):
    da, dp = elastic_distances(q1, q2)
    return delta * da + (1.0 - delta) * dp


def _check_delta(delta):
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")


@dataclass
class DistanceMatrix:
    """Amplitude and phase matrices kept apart so delta can be re-mixed."""

    amplitude: np.ndarray
    phase: np.ndarray
    delta: float = 1.0

    def __post_init__(self):
        _check_delta(self.delta)
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        if self.amplitude.shape != self.phase.shape or self.amplitude.ndim != 2:
            raise ValueError("amplitude and phase must be matching square matrices")

    @property
    def n(self):
        return self.amplitude.shape[0]

    @property
    def combined(self):
        if self.delta == 1.0:
            return self.amplitude.copy()
        if self.delta == 0.0:
            return self.phase.copy()
        return self.delta * self.amplitude + (1.0 - self.delta) * self.phase

    def with_delta(self, delta):
        return DistanceMatrix(self.amplitude, self.phase, delta)

    def submatrix(self, idx):
        idx = np.asarray(idx)
        return DistanceMatrix(self.amplitude[np.ix_(idx, idx)],
                              self.phase[np.ix_(idx, idx)], self.delta)


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def distance_matrix(srvfs, delta=1.0, jobs=1):
    """All pairwise elastic distances among ``srvfs``.

    Pair (i, j) with i < j is computed once, aligning j onto i, and mirrored.
    Results do not depend on ``jobs``.
    """
    _check_delta(delta)
    srvfs = [np.ascontiguousarray(_as2d(q)) for q in srvfs]
    n = len(srvfs)
    if n == 0:
        raise ValueError("empty dataset")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    res = _map(lambda ij: elastic_distances(srvfs[ij[0]], srvfs[ij[1]]), pairs, jobs)
    amp = np.zeros((n, n))
    pha = np.zeros((n, n))
    for (i, j), (da, dp) in zip(pairs, res):
        amp[i, j] = amp[j, i] = da
        pha[i, j] = pha[j, i] = dp
    return DistanceMatrix(amp, pha, delta)


def cross_distances(rows, cols, delta=1.0, jobs=1):
    """Combined distances D(rows[i], cols[j]), aligning each col onto its row."""
    _check_delta(delta)
    rows = [np.ascontiguousarray(_as2d(q)) for q in rows]
    cols = [np.ascontiguousarray(_as2d(q)) for q in cols]
    pairs = [(i, j) for i in range(len(rows)) for j in range(len(cols))]
    res = _map(lambda ij: elastic_distances(rows[ij[0]], cols[ij[1]]), pairs, jobs)
    out = np.zeros((len(rows), len(cols)))
    for (i, j), (da, dp) in zip(pairs, res):
        out[i, j] = delta * da + (1.0 - delta) * dp
    return out
