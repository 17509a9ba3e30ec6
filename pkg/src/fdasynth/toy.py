"""Seeded toy trajectories: clusters of smooth 3-d curves (x, y, elapsed time)
standing in for a real GPS corpus."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from fdasynth.errors import ValidationError
from fdasynth.evaluate import resample
from fdasynth.functional import Curve, CurveDataset, Grid
from fdasynth.ingest import EARTH_RADIUS_M, NormalizationParams

# planar box (meters) and time span (seconds) the unit cube maps back to
TOY_BOX = NormalizationParams(0.0, 20000.0, 0.0, 20000.0, 0.0, 3600.0, orientation="min0")
N_MODES = 3
N_DRAWS = N_MODES + 5


@dataclass(frozen=True)
class ToyDataSpec:
    n_clusters: int = 3
    curves_per_cluster: int = 20
    noise_scale: float = 0.05
    seed: int = 7
    trips_per_user: int = 2
    trip_jitter: float = 0.1  # trip-to-trip spread relative to user-to-user spread

    def __post_init__(self):
        if self.n_clusters < 1 or self.curves_per_cluster < 1:
            raise ValidationError("toy spec counts must be positive")
        if self.noise_scale < 0 or self.trip_jitter < 0:
            raise ValidationError("noise_scale and trip_jitter must be >= 0")
        if self.trips_per_user < 1:
            raise ValidationError("trips_per_user must be positive")


def _template(rng):
    return {
        "start": rng.uniform(0.25, 0.75, size=2),
        "heading": rng.uniform(0.0, 2.0 * np.pi),
        "length": rng.uniform(0.25, 0.45),
        "bend": rng.uniform(-2.0, 2.0),
        "duration": rng.uniform(0.3, 0.7),
        "pace": rng.uniform(-0.5, 0.5),
    }


def _curve(u, tpl, z):
    """One curve from its template and perturbation vector ``z`` (already scaled)."""
    modes = np.arange(1, N_MODES + 1)
    # smooth heading wobble: the turning angle gets a few sine modes
    wobble = z[:N_MODES] * 4.0 / modes
    heading = tpl["heading"] + tpl["bend"] * (u - 0.5) + np.sin(np.pi * np.outer(u, modes)) @ wobble
    length = tpl["length"] * (1.0 + z[N_MODES])
    du = np.diff(u)
    vx, vy = np.cos(heading), np.sin(heading)
    x = np.concatenate([[0.0], np.cumsum(0.5 * (vx[1:] + vx[:-1]) * du)]) * length
    y = np.concatenate([[0.0], np.cumsum(0.5 * (vy[1:] + vy[:-1]) * du)]) * length
    start = tpl["start"] + z[N_MODES + 1:N_MODES + 3]
    # monotone pacing: derivative 1 + pace*cos(2 pi u) stays positive for |pace| < 1
    pace = np.clip(tpl["pace"] + z[N_MODES + 3], -0.9, 0.9)
    tau = u + pace * np.sin(2.0 * np.pi * u) / (2.0 * np.pi)
    duration = tpl["duration"] * (1.0 + z[N_MODES + 4])
    t = max(duration, 0.05) * tau
    return np.column_stack([start[0] + x, start[1] + y, t])

def generate_toy(spec: ToyDataSpec = ToyDataSpec(), grid: Grid = Grid()) -> CurveDataset:
    """Clustered toy curves in the unit cube; labels are kept in metadata.

    Within a cluster, curves come in groups of ``trips_per_user`` repeated trips:
    each simulated user has its own perturbation of the cluster template and
    every trip adds a smaller one on top.
    """
    root = np.random.SeedSequence(spec.seed)
    tpl_ss, *curve_ss = root.spawn(1 + spec.n_clusters)
    tpl_rng = np.random.default_rng(tpl_ss)
    u = grid.abscissae
    curves, labels = [], []
    for c in range(spec.n_clusters):
        tpl = _template(tpl_rng)
        rng = np.random.default_rng(curve_ss[c])
        for j in range(spec.curves_per_cluster):
            if j % spec.trips_per_user == 0:
                user = rng.normal(size=N_DRAWS)
            z = user + spec.trip_jitter * rng.normal(size=N_DRAWS)
            curves.append(Curve(f"toy-c{c}-{j:03d}", _curve(u, tpl, spec.noise_scale * z),
                                source_id=f"toy-c{c}-u{j // spec.trips_per_user:03d}", grid=grid))
            labels.append(c + 1)
    meta = {"generator": "toy", "spec": {"n_clusters": spec.n_clusters,
                                         "curves_per_cluster": spec.curves_per_cluster,
                                         "noise_scale": spec.noise_scale, "seed": spec.seed,
                                         "trips_per_user": spec.trips_per_user,
                                         "trip_jitter": spec.trip_jitter},
            "labels": labels}
    return CurveDataset(curves, grid, TOY_BOX, meta)


def toy_signals(dataset: CurveDataset, points: int = 30, origin=(45.07, 7.69),
                start_epoch: float = 1.7e9, accuracy: float = 15.0) -> str:
    """Render curves as a GPS signal CSV (local tangent plane at ``origin``).

    Each curve becomes one trajectory of ``points`` fixes; the leading path of
    the curve's source id is its user. Trips start an hour apart.
    """
    norm = dataset.normalization or TOY_BOX
    lat0, lon0 = origin
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user_id", "trajectory_id", "timestamp", "lat", "lon", "accuracy"])
    for n, c in enumerate(dataset.curves):
        v = resample(c.values, points)
        x, y, t = norm.inverse(v[:, 0], v[:, 1], v[:, 2])
        x, y = x - 10000.0, y - 10000.0  # centre the box on the origin
        lat = lat0 + np.degrees(y / EARTH_RADIUS_M)
        lon = lon0 + np.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
        ts = start_epoch + 3600.0 * n + (t - t[0])
        user = c.source_id or c.id
        for j in range(points):
            w.writerow([user, c.id, repr(float(ts[j])), repr(float(lat[j])), repr(float(lon[j])),
                        accuracy])
    return buf.getvalue()
