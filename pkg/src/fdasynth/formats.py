"""On-disk formats: curve datasets (JSON), distance matrices (binary),
normalized trajectories (NDJSON)."""
from __future__ import annotations

import json
import struct

import numpy as np

from fdasynth.elastic import DistanceMatrix
from fdasynth.errors import ValidationError
from fdasynth.functional import Curve, CurveDataset, Grid
from fdasynth.ingest import NormalizationParams, NormalizedTrajectory

CURVES_FORMAT = "fdasynth-curves"
CURVES_VERSION = 1
DIST_MAGIC = b"FDSM"
DIST_VERSION = 1
_DIST_HEADER = struct.Struct("<4sIId")


def curves_to_json(ds: CurveDataset) -> dict:
    # json writes floats with repr(), which round-trips exactly
    return {
        "format": CURVES_FORMAT,
        "version": CURVES_VERSION,
        "grid": {"m": ds.grid.m, "abscissae": ds.grid.abscissae.tolist()},
        "normalization": ds.normalization.to_dict() if ds.normalization is not None else None,
        "metadata": ds.metadata,
        "curves": [{"id": c.id, "source_id": c.source_id, "values": c.values.tolist()}
                   for c in ds.curves],
    }


def curves_from_json(doc: dict) -> CurveDataset:
    if doc.get("format") != CURVES_FORMAT:
        raise ValidationError(f"not a curve dataset (format={doc.get('format')!r})")
    if doc.get("version") != CURVES_VERSION:
        raise ValidationError(f"unsupported curve dataset version {doc.get('version')!r}")
    grid = Grid(int(doc["grid"]["m"]))
    absc = np.asarray(doc["grid"]["abscissae"], dtype=float)
    if absc.shape != (grid.m,) or not np.array_equal(absc, grid.abscissae):
        raise ValidationError("grid abscissae do not match a uniform grid on [0, 1]")
    norm = doc.get("normalization")
    curves = [Curve(c["id"], np.asarray(c["values"], dtype=float), c.get("source_id", ""), grid)
              for c in doc["curves"]]
    return CurveDataset(curves, grid, NormalizationParams.from_dict(norm) if norm else None,
                        dict(doc.get("metadata") or {}))


def write_curves(ds, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(curves_to_json(ds), fh)


def read_curves(path):
    with open(path, encoding="utf-8") as fh:
        return curves_from_json(json.load(fh))


def distance_to_bytes(dm: DistanceMatrix) -> bytes:
    n = dm.n
    parts = [_DIST_HEADER.pack(DIST_MAGIC, DIST_VERSION, n, float(dm.delta))]
    for block in (dm.amplitude, dm.phase, dm.combined):
        parts.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    return b"".join(parts)


def distance_from_bytes(buf: bytes) -> DistanceMatrix:
    if len(buf) < _DIST_HEADER.size:
        raise ValidationError("distance file truncated")
    magic, version, n, delta = _DIST_HEADER.unpack_from(buf)
    if magic != DIST_MAGIC:
        raise ValidationError(f"bad distance-matrix magic {magic!r}")
    if version != DIST_VERSION:
        raise ValidationError(f"unsupported distance-matrix version {version}")
    size = n * n * 8
    if len(buf) != _DIST_HEADER.size + 3 * size:
        raise ValidationError("distance file length does not match its header")
    blocks = [np.frombuffer(buf, dtype="<f8", count=n * n, offset=_DIST_HEADER.size + k * size)
              .reshape(n, n).astype(float) for k in range(3)]
    dm = DistanceMatrix(blocks[0], blocks[1], delta)
    stored = blocks[2]
    if not np.array_equal(stored, dm.combined):
        raise ValidationError("stored combined block disagrees with amplitude/phase/delta")
    return dm


def write_distance(dm, path):
    with open(path, "wb") as fh:
        fh.write(distance_to_bytes(dm))


def read_distance(path):
    with open(path, "rb") as fh:
        return distance_from_bytes(fh.read())


def write_ndjson(trajs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for tr in trajs:
            fh.write(json.dumps(tr.to_json()) + "\n")


def read_ndjson(path):
    with open(path, encoding="utf-8") as fh:
        return [NormalizedTrajectory.from_json(json.loads(line)) for line in fh if line.strip()]


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
