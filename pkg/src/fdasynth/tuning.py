"""Hyperparameter selection: the amplitude/phase mixing weight via a
cophenetic-correlation sweep, then (K, alpha0) by the two-phase
privacy/utility search over within-cluster distances."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import cophenet, linkage, to_tree
from scipy.spatial.distance import squareform

from fdasynth.elastic import cross_distances, distance_matrix, to_srvf
from fdasynth.errors import ValidationError
from fdasynth.synthesis import SynthesisConfig, synthesize_all

log = logging.getLogger(__name__)

FLAT_TOL = 0.02
ELBOW_RATIO = 0.25


def _condensed(d):
    d = np.asarray(d, dtype=float)
    return squareform(0.5 * (d + d.T), checks=False)


def pearson(a, b):
    """Pearson correlation; 0 when either input has no spread."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    if den == 0.0:
        return 0.0
    return float(np.clip((a @ b) / den, -1.0, 1.0))


@dataclass
class DeltaSweepResult:
    deltas: np.ndarray
    coph_corr_amp: np.ndarray
    coph_corr_phase: np.ndarray
    abs_diff: np.ndarray
    chosen_delta: float
    flat_flag: bool

    def to_json(self):
        return {"deltas": self.deltas.tolist(), "coph_corr_amp": self.coph_corr_amp.tolist(),
                "coph_corr_phase": self.coph_corr_phase.tolist(),
                "abs_diff": self.abs_diff.tolist(), "chosen_delta": self.chosen_delta,
                "flat_flag": self.flat_flag}


def tune_delta(amplitude, phase, deltas=None):
    """Sweep delta and pick the one balancing the cophenetic correlations of the
    complete-linkage dendrogram with the amplitude and phase matrices.

    ``flat_flag`` marks a sweep whose criterion barely moves: the two sources
    are redundant and any delta is defensible (see :func:`effective_delta`).
    """
    amplitude = np.asarray(amplitude, dtype=float)
    n = amplitude.shape[0]
    if n < 3:
        raise ValidationError("delta tuning needs at least 3 curves")
    deltas = np.round(np.linspace(0.0, 1.0, 21), 12) if deltas is None else np.asarray(deltas, float)
    if deltas.size == 0:
        raise ValidationError("empty delta grid")
    ca, cp = _condensed(amplitude), _condensed(phase)
    corr_a, corr_p = [], []
    for delta in deltas:
        comb = delta * ca + (1.0 - delta) * cp
        coph = cophenet(linkage(comb, method="complete"))
        corr_a.append(pearson(coph, ca))
        corr_p.append(pearson(coph, cp))
    corr_a, corr_p = np.array(corr_a), np.array(corr_p)
    diff = np.abs(corr_a - corr_p)
    best = diff.min()
    ties = np.flatnonzero(diff <= best + 1e-12)
    chosen = float(deltas[ties].max())
    return DeltaSweepResult(deltas, corr_a, corr_p, diff, chosen, bool(diff.max() - diff.min() < FLAT_TOL))


def effective_delta(sweep, delta_if_flat=None):
    """Delta a pipeline should use: the sweep's choice, or ``delta_if_flat``
    when the sweep is flat and an override is configured."""
    if sweep.flat_flag and delta_if_flat is not None:
        return float(delta_if_flat)
    return sweep.chosen_delta


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # 1..G
    G: int
    sizes: list
    warnings: list = field(default_factory=list)

    def members(self):
        return [np.flatnonzero(self.labels == g) for g in range(1, self.G + 1)]

    def to_json(self):
        return {"labels": self.labels.tolist(), "G": self.G, "sizes": self.sizes,
                "warnings": self.warnings}

    @classmethod
    def from_json(cls, d):
        labels = np.asarray(d["labels"], dtype=int)
        g = int(labels.max()) if labels.size else 0
        return cls(labels, g, [int(np.sum(labels == k)) for k in range(1, g + 1)],
                   list(d.get("warnings", [])))


def _subtree_heights(node):
    out, stack = [], [node]
    while stack:
        nd = stack.pop()
        if not nd.is_leaf():
            out.append(nd.dist)
            stack.extend((nd.left, nd.right))
    return out


def cluster_curves(dist, min_size=20):
    """Complete-linkage clustering with an adaptive dynamic cut.

    A node splits when its merge height exceeds the median merge height of its
    own subtree and both children hold at least ``min_size`` curves. When only
    one child is large enough, the small one is set aside and the large one is
    searched further; set-aside curves join the nearest accepted cluster
    (smallest mean distance) at the end.
    """
    d = np.asarray(dist, dtype=float)
    n = d.shape[0]
    if min_size < 1:
        raise ValidationError("min_size must be >= 1")
    if n < max(min_size, 2):
        msg = f"{n} curves is below the minimum cluster size {min_size}; using one cluster"
        log.warning(msg)
        return ClusterAssignment(np.ones(n, dtype=int), 1, [n], [msg])
    root = to_tree(linkage(_condensed(d), method="complete"))
    pending = []

    def cut(node):
        if node.count < 2 * min_size or node.dist <= np.median(_subtree_heights(node)):
            return [node.pre_order()]
        left, right = node.left, node.right
        if left.count >= min_size and right.count >= min_size:
            return cut(left) + cut(right)
        big, small = (left, right) if left.count >= right.count else (right, left)
        if big.count >= 2 * min_size:
            sub = cut(big)
            if len(sub) > 1:
                pending.extend(small.pre_order())
                return sub
        return [node.pre_order()]

    groups = [sorted(g) for g in cut(root)]
    for leaf in sorted(pending):
        means = [d[leaf, g].mean() for g in groups]
        groups[int(np.argmin(means))].append(leaf)
    groups.sort(key=min)
    labels = np.zeros(n, dtype=int)
    for g, members in enumerate(groups, start=1):
        labels[members] = g
    return ClusterAssignment(labels, len(groups), [len(g) for g in groups])


@dataclass(frozen=True)
class TuningGrid:
    k_values: tuple = (3, 6, 9, 12, 15, 18, 21, 24)
    alpha_values: tuple = (1, 3, 5, 7, 9, 11, 13, 15, 17, 19)
    criterion: str = "elbow"
    threshold: float | None = None
    seed: int = 42
    elbow_ratio: float = ELBOW_RATIO

    def __post_init__(self):
        if not self.k_values or not self.alpha_values:
            raise ValidationError("tuning grids must be nonempty")
        for name in ("k_values", "alpha_values"):
            v = list(getattr(self, name))
            if v != sorted(v) or len(set(v)) != len(v):
                raise ValidationError(f"{name} must be strictly ascending")
        if self.criterion not in ("elbow", "threshold"):
            raise ValidationError(f"unknown criterion {self.criterion!r}")
        if self.criterion == "threshold" and self.threshold is not None and not self.threshold > 0:
            raise ValidationError("threshold b must be > 0")


def nn_percentile_threshold(dist, q=25.0):
    """q-th percentile of per-curve nearest-neighbour distances."""
    d = np.array(dist, dtype=float)
    np.fill_diagonal(d, np.inf)
    return float(np.percentile(d.min(axis=1), q))


def trial_seed(seed, k_index):
    """Synthesis seed shared by every alpha0 trial at one K grid position."""
    return int(np.random.SeedSequence([int(seed), int(k_index)]).generate_state(1, dtype=np.uint32)[0])


def elbow_index(values, ratio=ELBOW_RATIO):
    """First index whose forward difference falls below ``ratio`` of the largest one."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0
    fd = np.diff(v)
    top = fd.max()
    if not top > 0:
        return 0
    return int(np.flatnonzero(fd < ratio * top)[0]) if np.any(fd < ratio * top) else len(v) - 1


@dataclass
class TuningReport:
    k_values: list
    alpha_values: list
    criterion: str
    threshold: float | None
    I1: np.ndarray
    alpha_hat_per_k: list  # None where unsatisfiable
    rho_per_cluster: dict = field(default_factory=dict)
    I2: list = field(default_factory=list)
    chosen: tuple | None = None
    d1_computations: list = field(default_factory=list)
    d2_computations: list = field(default_factory=list)
    expected_d1_computations: int = 0
    warnings: list = field(default_factory=list)

    def to_json(self):
        return {
            "k_values": list(self.k_values), "alpha_values": list(self.alpha_values),
            "criterion": self.criterion, "threshold": self.threshold,
            "I1": self.I1.tolist(), "alpha_hat_per_k": self.alpha_hat_per_k,
            "rho_per_cluster": {str(k): v for k, v in self.rho_per_cluster.items()},
            "I2": self.I2, "chosen": list(self.chosen) if self.chosen else None,
            "d1_computations": self.d1_computations, "d2_computations": self.d2_computations,
            "expected_d1_computations": self.expected_d1_computations,
            "warnings": self.warnings,
        }

    def csv_rows(self):
        """Long-format rows for the phase-one curves and phase-two indicator."""
        rows = [("phase", "K", "alpha0", "value")]
        for a, k in enumerate(self.k_values):
            for b, alpha in enumerate(self.alpha_values):
                rows.append(("I1", k, alpha, repr(float(self.I1[a, b]))))
        for k, v in zip([k for k, a in zip(self.k_values, self.alpha_hat_per_k) if a is not None],
                        self.I2):
            rows.append(("I2", k, "", repr(float(v))))
        return rows


class _Trials:
    """Synthetic datasets per (K, alpha0), cached so phase two reuses phase one."""

    def __init__(self, dataset, dm, grid, base, jobs):
        self.dataset, self.dm, self.grid, self.base, self.jobs = dataset, dm, grid, base, jobs
        self.srvfs = [to_srvf(c.values) for c in dataset.curves]
        self.cache = {}

    def get(self, k_index, k, alpha0):
        key = (k, alpha0)
        if key not in self.cache:
            cfg = SynthesisConfig(k=k, alpha0=alpha0, kernel=self.base.kernel, beta0=self.base.beta0,
                                  delta=self.dm.delta, seed=trial_seed(self.grid.seed, k_index),
                                  karcher_tol=self.base.karcher_tol,
                                  karcher_max_iter=self.base.karcher_max_iter)
            synth, _ = synthesize_all(self.dataset, self.dm.combined, cfg, jobs=self.jobs,
                                      srvfs=self.srvfs)
            self.cache[key] = [to_srvf(c.values) for c in synth.curves]
        return self.cache[key]


def tune_alpha_per_k(dataset, dm, clusters, grid, base=SynthesisConfig(), jobs=1, _trials=None):
    """Phase one: minimum synthetic-to-original within-cluster distance over the
    (K, alpha0) grid, and the alpha0 chosen per K."""
    n = len(dataset)
    ks = [k for k in grid.k_values]
    if any(k >= n for k in ks):
        raise ValidationError(f"every K must be below the dataset size {n}")
    trials = _trials or _Trials(dataset, dm, grid, base, jobs)
    groups = clusters.members()
    threshold = grid.threshold
    warnings = []
    if grid.criterion == "threshold" and threshold is None:
        threshold = nn_percentile_threshold(dm.combined)
        warnings.append(f"threshold derived from the 25th percentile of nearest-neighbour "
                        f"distances: {threshold!r}")
    i1 = np.zeros((len(ks), len(grid.alpha_values)))
    counts = []
    for a, k in enumerate(ks):
        for b, alpha0 in enumerate(grid.alpha_values):
            synth = trials.get(a, k, alpha0)
            minima, count = [], 0
            for members in groups:
                block = cross_distances([synth[i] for i in members],
                                        [trials.srvfs[j] for j in members], dm.delta, jobs)
                count += block.size
                minima.append(block.min())
            i1[a, b] = min(minima)
            counts.append(count)
    alpha_hat = []
    for a, k in enumerate(ks):
        if grid.criterion == "elbow":
            alpha_hat.append(grid.alpha_values[elbow_index(i1[a], grid.elbow_ratio)])
        else:
            above = np.flatnonzero(i1[a] > threshold)
            if above.size:
                alpha_hat.append(grid.alpha_values[above[0]])
            else:
                alpha_hat.append(None)
                msg = f"K={k}: no alpha0 in the grid exceeds threshold {threshold!r}"
                log.warning(msg)
                warnings.append(msg)
    report = TuningReport(list(ks), list(grid.alpha_values), grid.criterion, threshold, i1,
                          alpha_hat, d1_computations=counts,
                          expected_d1_computations=int(sum(len(g) ** 2 for g in groups)),
                          warnings=warnings)
    return report, trials


def tune_k(dataset, dm, clusters, report, grid, base=SynthesisConfig(), jobs=1, _trials=None):
    """Phase two: pick K maximizing the 25th percentile of |within-cluster
    correlation| between original and synthetic distance matrices."""
    trials = _trials or _Trials(dataset, dm, grid, base, jobs)
    groups = [g for g in clusters.members()]
    usable = [g for g in groups if len(g) >= 3]
    skipped = len(groups) - len(usable)
    if skipped:
        msg = f"{skipped} cluster(s) with fewer than 3 curves skipped in phase two"
        log.warning(msg)
        report.warnings.append(msg)
    pairs = [(a, k, alpha) for a, (k, alpha) in enumerate(zip(report.k_values, report.alpha_hat_per_k))
             if alpha is not None]
    if not pairs:
        raise ValidationError("no satisfiable (K, alpha0) pair to compare")
    comb = dm.combined
    i2 = []
    for a, k, alpha0 in pairs:
        synth = trials.get(a, k, alpha0)
        rhos, count = [], 0
        for members in usable:
            orig = comb[np.ix_(members, members)]
            sdm = distance_matrix([synth[i] for i in members], dm.delta, jobs)
            count += len(members) * (len(members) - 1) // 2
            iu = np.triu_indices(len(members), 1)
            rhos.append(pearson(sdm.combined[iu], orig[iu]))
        report.rho_per_cluster[k] = rhos
        report.d2_computations.append(count)
        i2.append(float(np.percentile(np.abs(rhos), 25)) if rhos else float("nan"))
    report.I2 = i2
    scores = np.array([-np.inf if np.isnan(v) else v for v in i2])
    best = int(np.argmax(scores))  # first maximum = smallest K
    report.chosen = (pairs[best][1], pairs[best][2])
    return report


def tune(dataset, dm, clusters, grid, base=SynthesisConfig(), jobs=1):
    """Both phases; returns the :class:`TuningReport` with ``chosen`` set when
    at least one pair is satisfiable."""
    report, trials = tune_alpha_per_k(dataset, dm, clusters, grid, base, jobs)
    if all(a is None for a in report.alpha_hat_per_k):
        report.warnings.append("unsatisfiable: no (K, alpha0) pair passes the criterion")
        return report
    return tune_k(dataset, dm, clusters, report, grid, base, jobs, _trials=trials)
