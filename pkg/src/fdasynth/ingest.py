"""GPS signal ingestion: parsing, planar projection, quality filtering and
normalization of trajectories to the unit cube."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from fdasynth.errors import NumericalError, ParseError, ValidationError

EARTH_RADIUS_M = 6371000.0
REQUIRED_COLUMNS = ("user_id", "trajectory_id", "timestamp", "lat", "lon")
# WGS84 ellipsoid, UTM scale
_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_UTM_K0 = 0.9996


@dataclass(frozen=True)
class RawPoint:
    lat: float
    lon: float
    timestamp: float
    accuracy: float | None = None
    user_id: str = ""


@dataclass
class RawTrajectory:
    trajectory_id: str
    user_id: str
    points: list


@dataclass
class PlanarTrajectory:
    """A trajectory with coordinates in meters on a Cartesian plane."""

    trajectory_id: str
    user_id: str
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    accuracy: np.ndarray
    projection: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FilterPolicy:
    min_points: int = 5
    max_gap_space: float = 3000.0
    max_gap_time: float = 1800.0
    max_accuracy: float = 1200.0
    max_speed: float = 90.0

    def __post_init__(self):
        for name in ("min_points", "max_gap_space", "max_gap_time", "max_accuracy", "max_speed"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"filter policy field {name} must be > 0")


@dataclass(frozen=True)
class NormalizationParams:
    min_c1: float
    max_c1: float
    min_c2: float
    max_c2: float
    min_t: float
    max_t: float
    orientation: str = "max0"

    def __post_init__(self):
        for axis in ("c1", "c2", "t"):
            lo, hi = getattr(self, f"min_{axis}"), getattr(self, f"max_{axis}")
            if not hi > lo:
                raise NumericalError(f"degenerate axis {axis}: max ({hi}) <= min ({lo})")
        if self.orientation not in ("max0", "min0"):
            raise ValidationError(f"unknown normalization orientation {self.orientation!r}")

    def _spatial(self, axis):
        return getattr(self, f"min_{axis}"), getattr(self, f"max_{axis}")

    def forward(self, c1, c2, t):
        """Map meters/seconds into [0, 1]^3.

        In ``max0`` orientation the spatial axes use (max - c) / (max - min),
        which reverses them; elapsed time always maps min -> 0 so it stays
        increasing.
        """
        out = []
        for axis, v in (("c1", c1), ("c2", c2)):
            lo, hi = self._spatial(axis)
            v = np.asarray(v, dtype=float)
            out.append((hi - v) / (hi - lo) if self.orientation == "max0" else (v - lo) / (hi - lo))
        out.append((np.asarray(t, dtype=float) - self.min_t) / (self.max_t - self.min_t))
        return tuple(out)

    def inverse(self, c1n, c2n, tn):
        out = []
        for axis, v in (("c1", c1n), ("c2", c2n)):
            lo, hi = self._spatial(axis)
            v = np.asarray(v, dtype=float)
            out.append(hi - v * (hi - lo) if self.orientation == "max0" else lo + v * (hi - lo))
        out.append(self.min_t + np.asarray(tn, dtype=float) * (self.max_t - self.min_t))
        return tuple(out)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("min_c1", "max_c1", "min_c2", "max_c2", "min_t", "max_t", "orientation")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("min_c1", "max_c1", "min_c2", "max_c2", "min_t", "max_t")},
                   orientation=d.get("orientation", "max0"))


@dataclass
class NormalizedTrajectory:
    trajectory_id: str
    user_id: str
    start_time: float
    points: np.ndarray  # (n, 3): c1', c2', t_e'

    def to_json(self):
        return {"trajectory_id": self.trajectory_id, "user_id": self.user_id,
                "start_time": self.start_time, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(d["trajectory_id"], d["user_id"], float(d["start_time"]),
                   np.asarray(d["points"], dtype=float).reshape(-1, 3))


@dataclass
class ParseResult:
    trajectories: list
    rejects: list  # dicts: line, reason, raw
    excluded: list  # dicts: trajectory_id, user_id, reason


def _to_float(value, name):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} is not a number: {value!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"{name} is not finite: {value!r}")
    return v


def parse_signals(stream):
    """Parse a CSV of GPS signals into trajectories.

    ``stream`` may be a text or binary file object, or a string. Bad rows land
    in ``rejects``; trajectories with tied timestamps or fewer than two points
    land in ``excluded``.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream, io.BufferedIOBase) or "b" in getattr(stream, "mode", ""):
        stream = io.TextIOWrapper(stream, encoding="utf-8")
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file, header row required", line=1) from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"missing required column(s): {', '.join(missing)}", line=1)
    col = {name: header.index(name) for name in header}
    has_acc = "accuracy" in col

    groups: dict[tuple, list] = {}
    rejects = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            lat = _to_float(row[col["lat"]], "lat")
            lon = _to_float(row[col["lon"]], "lon")
            ts = _to_float(row[col["timestamp"]], "timestamp")
            if not -90.0 <= lat <= 90.0:
                raise ValueError(f"lat out of range: {lat}")
            if not -180.0 <= lon <= 180.0:
                raise ValueError(f"lon out of range: {lon}")
            acc = None
            if has_acc and row[col["accuracy"]].strip():
                acc = _to_float(row[col["accuracy"]], "accuracy")
                if acc < 0:
                    raise ValueError(f"negative accuracy: {acc}")
            uid = row[col["user_id"]].strip()
            tid = row[col["trajectory_id"]].strip()
            if not uid or not tid:
                raise ValueError("empty user_id or trajectory_id")
        except ValueError as exc:
            rejects.append({"line": line, "reason": str(exc), "raw": row})
            continue
        groups.setdefault((uid, tid), []).append(RawPoint(lat, lon, ts, acc, uid))

    trajectories, excluded = [], []
    for (uid, tid), pts in groups.items():
        pts.sort(key=lambda p: p.timestamp)
        ts = [p.timestamp for p in pts]
        if any(b == a for a, b in zip(ts, ts[1:])):
            excluded.append({"trajectory_id": tid, "user_id": uid, "reason": "duplicate_timestamp"})
        elif len(pts) < 2:
            excluded.append({"trajectory_id": tid, "user_id": uid, "reason": "too_short"})
        else:
            trajectories.append(RawTrajectory(tid, uid, pts))
    return ParseResult(trajectories, rejects, excluded)


def corpus_origin(trajs):
    """Mean latitude/longitude over all points (the local-plane origin)."""
    lats = [p.lat for t in trajs for p in t.points]
    lons = [p.lon for t in trajs for p in t.points]
    if not lats:
        raise ValidationError("no points to project")
    return float(np.mean(lats)), float(np.mean(lons))


def utm_zone(lon):
    return int((lon + 180.0) // 6.0) % 60 + 1


def _tmerc(lat, lon, lon0):
    """Transverse Mercator (UTM) forward projection on WGS84, Snyder's series."""
    a, f = _WGS84_A, _WGS84_F
    e2 = f * (2 - f)
    ep2 = e2 / (1 - e2)
    phi = np.radians(lat)
    lam = np.radians(lon - lon0)
    sin, cos, tan = np.sin(phi), np.cos(phi), np.tan(phi)
    n = a / np.sqrt(1 - e2 * sin ** 2)
    t = tan ** 2
    c = ep2 * cos ** 2
    aa = lam * cos
    e4, e6 = e2 * e2, e2 * e2 * e2
    arc = a * ((1 - e2 / 4 - 3 * e4 / 64 - 5 * e6 / 256) * phi
               - (3 * e2 / 8 + 3 * e4 / 32 + 45 * e6 / 1024) * np.sin(2 * phi)
               + (15 * e4 / 256 + 45 * e6 / 1024) * np.sin(4 * phi)
               - (35 * e6 / 3072) * np.sin(6 * phi))
    x = _UTM_K0 * n * (aa + (1 - t + c) * aa ** 3 / 6
                       + (5 - 18 * t + t * t + 72 * c - 58 * ep2) * aa ** 5 / 120) + 500000.0
    y = _UTM_K0 * (arc + n * tan * (aa ** 2 / 2 + (5 - t + 9 * c + 4 * c * c) * aa ** 4 / 24
                                    + (61 - 58 * t + t * t + 600 * c - 330 * ep2) * aa ** 6 / 720))
    y = np.where(np.asarray(lat) < 0, y + 10000000.0, y)
    return x, y


def project_planar(traj, mode="local", origin=None, zone=None):
    """Project one trajectory to meters.

    ``local`` is an equirectangular tangent plane at ``origin`` (lat, lon),
    defaulting to the trajectory's own centroid; ``tmerc`` is UTM in ``zone``
    (defaulting to the zone of the first point) and refuses trajectories that
    leave it.
    """
    lat = np.array([p.lat for p in traj.points], dtype=float)
    lon = np.array([p.lon for p in traj.points], dtype=float)
    t = np.array([p.timestamp for p in traj.points], dtype=float)
    acc = np.array([np.nan if p.accuracy is None else p.accuracy for p in traj.points])
    if mode == "local":
        if origin is None:
            origin = (float(lat.mean()), float(lon.mean()))
        lat0, lon0 = origin
        x = EARTH_RADIUS_M * np.radians(lon - lon0) * math.cos(math.radians(lat0))
        y = EARTH_RADIUS_M * np.radians(lat - lat0)
        meta = {"mode": "local", "origin_lat": lat0, "origin_lon": lon0,
                "radius_m": EARTH_RADIUS_M}
    elif mode == "tmerc":
        zones = {utm_zone(v) for v in lon}
        if zone is None:
            zone = utm_zone(lon[0])
        if zones != {zone}:
            raise ValidationError(
                f"trajectory {traj.trajectory_id!r} spans UTM zones {sorted(zones)}, "
                f"expected only zone {zone}")
        lon0 = (zone - 1) * 6 - 180 + 3
        x, y = _tmerc(lat, lon, lon0)
        meta = {"mode": "tmerc", "zone": zone, "central_meridian": lon0,
                "hemisphere": "S" if lat.mean() < 0 else "N", "ellipsoid": "WGS84"}
    else:
        raise ValidationError(f"unknown projection mode {mode!r}")
    return PlanarTrajectory(traj.trajectory_id, traj.user_id, np.asarray(x, float),
                            np.asarray(y, float), t, acc, meta)


def project_all(trajs, mode="local"):
    """Project a corpus with one shared origin/zone."""
    if not trajs:
        return []
    if mode == "local":
        origin = corpus_origin(trajs)
        return [project_planar(t, "local", origin=origin) for t in trajs]
    zone = utm_zone(corpus_origin(trajs)[1])
    return [project_planar(t, "tmerc", zone=zone) for t in trajs]


def distinct_count(traj, min_separation=1.0):
    """Points further than ``min_separation`` meters from their predecessor, plus the first."""
    if len(traj.x) == 0:
        return 0
    step = np.hypot(np.diff(traj.x), np.diff(traj.y))
    return 1 + int(np.sum(step > min_separation))


def first_violation(traj, policy):
    """Name of the first failed policy predicate, or None."""
    if distinct_count(traj) < policy.min_points:
        return "min_points"
    dist = np.hypot(np.diff(traj.x), np.diff(traj.y))
    dt = np.diff(traj.t)
    if np.any(dist > policy.max_gap_space):
        return "max_gap_space"
    if np.any(dt > policy.max_gap_time):
        return "max_gap_time"
    acc = traj.accuracy[~np.isnan(traj.accuracy)]
    if np.any(acc > policy.max_accuracy):
        return "max_accuracy"
    speed_kmh = dist / dt * 3.6
    if np.any(speed_kmh > policy.max_speed):
        return "max_speed"
    return None


def filter_trajectories(trajs, policy=FilterPolicy()):
    """Split projected trajectories into (kept, dropped); dropped carry the reason."""
    kept, dropped = [], []
    for tr in trajs:
        reason = first_violation(tr, policy)
        if reason is None:
            kept.append(tr)
        else:
            dropped.append({"trajectory_id": tr.trajectory_id, "user_id": tr.user_id,
                            "reason": reason})
    return kept, dropped


def normalize(trajs, orientation="max0"):
    """Normalize a corpus of planar trajectories with global extrema.

    Elapsed time is taken per trajectory before the global min/max reduction.
    """
    if not trajs:
        raise ValidationError("cannot normalize an empty corpus")
    elapsed = [tr.t - tr.t[0] for tr in trajs]
    params = NormalizationParams(
        min_c1=float(min(tr.x.min() for tr in trajs)), max_c1=float(max(tr.x.max() for tr in trajs)),
        min_c2=float(min(tr.y.min() for tr in trajs)), max_c2=float(max(tr.y.max() for tr in trajs)),
        min_t=float(min(e.min() for e in elapsed)), max_t=float(max(e.max() for e in elapsed)),
        orientation=orientation)
    out = []
    for tr, te in zip(trajs, elapsed):
        c1, c2, tn = params.forward(tr.x, tr.y, te)
        pts = np.clip(np.column_stack([c1, c2, tn]), 0.0, 1.0)
        out.append(NormalizedTrajectory(tr.trajectory_id, tr.user_id, float(tr.t[0]), pts))
    return out, params


def denormalize(traj, params):
    """Inverse of :func:`normalize` for one trajectory: (x, y, absolute time)."""
    x, y, te = params.inverse(traj.points[:, 0], traj.points[:, 1], traj.points[:, 2])
    return x, y, te + traj.start_time
