"""Curves on a shared uniform grid, and the spline smoothing that turns
normalized trajectories into them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from fdasynth.errors import ValidationError

DEFAULT_GRID_SIZE = 101


@dataclass(frozen=True)
class Grid:
    m: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if self.m < 5:
            raise ValidationError(f"grid needs at least 5 points, got {self.m}")

    @property
    def abscissae(self):
        return np.linspace(0.0, 1.0, self.m)


@dataclass
class Curve:
    id: str
    values: np.ndarray  # (m, p)
    source_id: str = ""
    grid: Grid | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError(f"curve {self.id!r}: values must be (m, p)")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"curve {self.id!r} has non-finite values")
        if self.grid is None:
            self.grid = Grid(self.values.shape[0])
        elif self.grid.m != self.values.shape[0]:
            raise ValidationError(f"curve {self.id!r}: {self.values.shape[0]} samples on a "
                                  f"{self.grid.m}-point grid")

    @property
    def start(self):
        return self.values[0]


@dataclass
class CurveDataset:
    curves: list
    grid: Grid
    normalization: object = None  # NormalizationParams or None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.id for c in self.curves]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate curve ids: {dup[:5]}")
        for c in self.curves:
            if c.values.shape[0] != self.grid.m:
                raise ValidationError(f"curve {c.id!r} is not on the dataset grid (m={self.grid.m})")
            c.grid = self.grid

    def __len__(self):
        return len(self.curves)

    @property
    def ids(self):
        return [c.id for c in self.curves]

    def values(self):
        """Stacked ``(n, m, p)`` array."""
        return np.stack([c.values for c in self.curves]) if self.curves else np.zeros((0, self.grid.m, 3))

    def subset(self, idx):
        return CurveDataset([self.curves[i] for i in idx], self.grid, self.normalization,
                            dict(self.metadata))


def _knots(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValidationError("knot abscissae and values must be 1-d of equal length")
    if len(xs) < 2:
        raise ValidationError("need at least two knots")
    if np.any(np.diff(xs) <= 0):
        bad = int(np.argmax(np.diff(xs) <= 0)) + 1
        raise ValidationError(f"knot abscissae must be strictly increasing (knot {bad})")
    return xs, ys


def smooth_spatial(xs, ys, grid=Grid()):
    """Natural cubic spline through the knots, sampled on ``grid``."""
    xs, ys = _knots(xs, ys)
    if len(xs) == 2:
        return np.interp(grid.abscissae, xs, ys)
    return CubicSpline(xs, ys, bc_type="natural")(grid.abscissae)


def fritsch_carlson_slopes(xs, ys):
    """Monotone Hermite tangents (Fritsch and Carlson, 1980)."""
    h = np.diff(xs)
    delta = np.diff(ys) / h
    n = len(xs)
    m = np.empty(n)
    m[0], m[-1] = delta[0], delta[-1]
    m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
    m[1:-1][delta[:-1] * delta[1:] <= 0] = 0.0
    for k in range(n - 1):
        if delta[k] == 0.0:
            m[k] = m[k + 1] = 0.0
            continue
        a, b = m[k] / delta[k], m[k + 1] / delta[k]
        r = a * a + b * b
        if r > 9.0:
            tau = 3.0 / np.sqrt(r)
            m[k] = tau * a * delta[k]
            m[k + 1] = tau * b * delta[k]
    return m


def smooth_temporal(xs, ys, grid=Grid()):
    """Monotone cubic interpolant for non-decreasing data, sampled on ``grid``."""
    xs, ys = _knots(xs, ys)
    dy = np.diff(ys)
    if np.any(dy < 0):
        k = int(np.argmax(dy < 0))
        raise ValidationError(f"temporal knots decrease between knot {k} ({ys[k]!r}) "
                              f"and knot {k + 1} ({ys[k + 1]!r})")
    out = CubicHermiteSpline(xs, ys, fritsch_carlson_slopes(xs, ys))(grid.abscissae)
    # Hermite evaluation is monotone in exact arithmetic; strip roundoff
    return np.maximum.accumulate(out)


def build_dataset(trajs, grid=Grid(), normalization=None):
    """One curve per normalized trajectory, knots at record-order positions j/(N-1)."""
    curves = []
    for tr in trajs:
        pts = np.asarray(tr.points, dtype=float)
        if len(pts) < 2:
            raise ValidationError(f"trajectory {tr.trajectory_id!r} has fewer than 2 points")
        xs = np.linspace(0.0, 1.0, len(pts))
        try:
            vals = np.column_stack([smooth_spatial(xs, pts[:, 0], grid),
                                    smooth_spatial(xs, pts[:, 1], grid),
                                    smooth_temporal(xs, pts[:, 2], grid)])
        except ValidationError as exc:
            raise ValidationError(f"trajectory {tr.trajectory_id!r}: {exc}") from exc
        curves.append(Curve(tr.trajectory_id, vals, source_id=tr.trajectory_id, grid=grid))
    return CurveDataset(curves, grid, normalization)
