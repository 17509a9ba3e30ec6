"""Stage runners and the end-to-end pipeline.

Every stage reads and writes files only, so the CLI subcommands and the
pipeline share one code path. Artifacts carry no wall-clock data; timings and
hashes go to the manifest.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from fdasynth import evaluate, formats, tuning
from fdasynth.elastic import distance_matrix, to_srvf
from fdasynth.errors import ValidationError
from fdasynth.functional import Grid, build_dataset
from fdasynth.ingest import (FilterPolicy, NormalizationParams, filter_trajectories, normalize,
                             parse_signals, project_all)
from fdasynth.synthesis import SynthesisConfig, synthesize_all
from fdasynth.toy import ToyDataSpec, generate_toy, toy_signals

log = logging.getLogger(__name__)

STAGES = ("ingest", "smooth", "dist", "tune-delta", "cluster", "tune", "synth", "eval")
ARTIFACTS = {
    "ingest": "trajectories.ndjson",
    "smooth": "curves.json",
    "dist": "dist.bin",
    "tune-delta": "delta.json",
    "cluster": "labels.json",
    "tune": "tuning.json",
    "synth": "synthetic.json",
    "eval": "eval.json",
}
MANIFEST = "manifest.json"


def parse_grid(text, cast=float):
    """``a:b:step`` (inclusive) or a comma list."""
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            vals = [a + i * step for i in range(n)]
            vals = [round(v, 12) for v in vals]
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"bad grid specification {text!r}") from None
    if not vals:
        raise ValidationError(f"empty grid {text!r}")
    if cast is int:
        if any(v != int(v) for v in vals):
            raise ValidationError(f"grid {text!r} must be integral")
        return [int(v) for v in vals]
    return vals


def sidecar_path(ndjson_path):
    p = Path(ndjson_path)
    return p.with_name(p.stem + ".norm.json")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _need(path):
    if not Path(path).is_file():
        raise ValidationError(f"input file not found: {path}")
    return path


# ---- stages -----------------------------------------------------------------

def stage_ingest(input_csv, output, policy=FilterPolicy(), projection="local",
                 orientation="max0", rejects=None):
    with open(_need(input_csv), "rb") as fh:
        parsed = parse_signals(fh)
    planar = project_all(parsed.trajectories, projection)
    kept, dropped = filter_trajectories(planar, policy)
    normed, params = normalize(kept, orientation)
    formats.write_ndjson(normed, output)
    meta = planar[0].projection if planar else {}
    formats.write_json({"format": "fdasynth-norm", "version": 1, "normalization": params.to_dict(),
                        "projection": meta}, sidecar_path(output))
    if rejects:
        formats.write_json({"rejected_rows": parsed.rejects,
                            "excluded": parsed.excluded + dropped}, rejects)
    log.info("ingest: %d trajectories kept, %d rows rejected, %d trajectories excluded",
             len(normed), len(parsed.rejects), len(parsed.excluded) + len(dropped))
    return {"kept": len(normed), "rejected_rows": len(parsed.rejects),
            "excluded": len(parsed.excluded) + len(dropped)}


def read_norm(path):
    doc = formats.read_json(_need(path))
    if doc.get("format") != "fdasynth-norm" or doc.get("version") != 1:
        raise ValidationError(f"{path}: not a version-1 normalization sidecar")
    return NormalizationParams.from_dict(doc["normalization"])


def stage_smooth(input_ndjson, output, grid_size=101, norm=None):
    trajs = formats.read_ndjson(_need(input_ndjson))
    params = read_norm(norm or sidecar_path(input_ndjson))
    ds = build_dataset(trajs, Grid(grid_size), params)
    formats.write_curves(ds, output)
    return {"curves": len(ds)}


def stage_dist(curves_path, output, delta=1.0, jobs=1):
    ds = formats.read_curves(_need(curves_path))
    dm = distance_matrix([to_srvf(c.values) for c in ds.curves], delta, jobs)
    formats.write_distance(dm, output)
    return {"n": dm.n}


def stage_tune_delta(dist_path, output, grid="0:1:0.05", delta_if_flat=None):
    dm = formats.read_distance(_need(dist_path))
    sweep = tuning.tune_delta(dm.amplitude, dm.phase, np.array(parse_grid(grid)))
    doc = sweep.to_json()
    doc["delta_if_flat"] = delta_if_flat
    doc["effective_delta"] = tuning.effective_delta(sweep, delta_if_flat)
    formats.write_json(doc, output)
    return {"chosen_delta": sweep.chosen_delta, "effective_delta": doc["effective_delta"],
            "flat_flag": sweep.flat_flag}


def _delta_matrix(dist_path, delta):
    dm = formats.read_distance(_need(dist_path))
    return dm if delta is None else dm.with_delta(delta)


def stage_cluster(dist_path, output, min_size=20, delta=None):
    dm = _delta_matrix(dist_path, delta)
    assign = tuning.cluster_curves(dm.combined, min_size)
    doc = assign.to_json()
    doc["delta"] = dm.delta
    formats.write_json(doc, output)
    return {"G": assign.G, "sizes": assign.sizes}


def read_labels(path):
    return tuning.ClusterAssignment.from_json(formats.read_json(_need(path)))


def _synth_base(cfg):
    return SynthesisConfig(kernel=cfg.kernel, beta0=cfg.beta0, karcher_tol=cfg.karcher_tol,
                           karcher_max_iter=cfg.karcher_max_iter)


def stage_tune(curves_path, dist_path, labels_path, output, grid, base=SynthesisConfig(),
               delta=None, jobs=1, emit_csv=None):
    ds = formats.read_curves(_need(curves_path))
    dm = _delta_matrix(dist_path, delta)
    labels = read_labels(labels_path)
    if len(labels.labels) != len(ds):
        raise ValidationError(f"{labels_path} labels {len(labels.labels)} curves, dataset has {len(ds)}")
    report = tuning.tune(ds, dm, labels, grid, base, jobs)
    doc = report.to_json()
    doc["delta"] = dm.delta
    doc["seed"] = grid.seed
    formats.write_json(doc, output)
    if emit_csv:
        with open(emit_csv, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(report.csv_rows())
    for w in report.warnings:
        log.warning("tune: %s", w)
    return {"chosen": list(report.chosen) if report.chosen else None, "warnings": report.warnings}


def stage_synth(curves_path, dist_path, output, config, report_path=None, jobs=1):
    ds = formats.read_curves(_need(curves_path))
    dm = _delta_matrix(dist_path, config.delta)
    synth, report = synthesize_all(ds, dm.combined, config, jobs)
    formats.write_curves(synth, output)
    if report_path:
        formats.write_json(report.to_json(), report_path)
    return {"curves": len(synth), "clamped": synth.metadata.get("clamped_curves", 0)}


def stage_eval(orig_path, synth_path, output, tests=("mean", "cov", "privacy"), permutations=500,
               seed=42, delta=1.0, dist_path=None, karcher_tol=1e-3, karcher_max_iter=5, jobs=1,
               emit_csv=None):
    orig = formats.read_curves(_need(orig_path))
    synth = formats.read_curves(_need(synth_path))
    unknown = set(tests) - {"mean", "cov", "privacy"}
    if unknown:
        raise ValidationError(f"unknown test(s): {', '.join(sorted(unknown))}")
    doc = {"delta": delta, "tests": {}, "config": {
        "permutations": permutations, "seed": seed, "karcher_tol": karcher_tol,
        "karcher_max_iter": karcher_max_iter}}
    summary = {}
    if "mean" in tests:
        r = evaluate.mean_permutation_test(orig, synth, permutations, delta, seed,
                                           karcher_tol, karcher_max_iter, jobs)
        doc["tests"]["mean"] = r.to_json()
        summary["p_mean"] = r.p_value
    if "cov" in tests:
        r = evaluate.covariance_permutation_test(orig, synth, permutations, seed=seed, jobs=jobs)
        doc["tests"]["cov"] = r.to_json()
        summary["p_cov"] = r.p_value
    if "privacy" in tests:
        od = None
        if dist_path:
            od = _delta_matrix(dist_path, delta).combined
        a = evaluate.privacy_audit(orig, synth, delta, orig_dist=od, jobs=jobs)
        doc["tests"]["privacy"] = a.to_json()
        summary["privacy_ratio"] = a.ratio
    if orig.normalization is not None:
        doc["features"] = {"original": evaluate.feature_stats(orig, orig.normalization),
                           "synthetic": evaluate.feature_stats(synth, orig.normalization)}
    formats.write_json(doc, output)
    if emit_csv:
        _eval_csv(doc, Path(emit_csv))
    return summary


def _eval_csv(doc, directory):
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("mean", "cov"):
        if name in doc["tests"]:
            t = doc["tests"][name]
            with open(directory / f"null_{name}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["permutation", "statistic", "observed"])
                for b, v in enumerate(t["statistic_null"]):
                    w.writerow([b, repr(v), repr(t["statistic_observed"])])
    if "privacy" in doc["tests"]:
        p = doc["tests"]["privacy"]
        with open(directory / "privacy.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "distance"])
            w.writerows(("orig-orig", repr(v)) for v in p["nn_orig_orig"])
            w.writerows(("synth-orig", repr(v)) for v in p["nn_synth_orig"])


def stage_heatmap(curves_path, output, norm=None, diagonal_km=evaluate.DEFAULT_DIAGONAL_KM,
                  samples=25):
    ds = formats.read_curves(_need(curves_path))
    params = read_norm(norm) if norm else ds.normalization
    hm = evaluate.hex_heatmap(ds, params, diagonal_km, samples)
    with open(output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "r", "center_x_m", "center_y_m", "count"])
        for q, r, x, y, c in hm.rows():
            w.writerow([q, r, repr(x), repr(y), c])
    return {"cells": len(hm.counts), "total": hm.total}


def stage_toygen(output, spec=ToyDataSpec(), grid_size=101, signals=None):
    ds = generate_toy(spec, Grid(grid_size))
    formats.write_curves(ds, output)
    if signals:
        Path(signals).write_text(toy_signals(ds), encoding="utf-8")
    return {"curves": len(ds)}


# ---- pipeline ---------------------------------------------------------------

@dataclass
class PipelineConfig:
    workdir: str = "fdasynth-run"
    input: str | None = None
    from_stage: str = "ingest"
    to_stage: str = "eval"
    # ingest / smooth
    projection: str = "local"
    orientation: str = "max0"
    min_points: int = 5
    max_gap_km: float = 3.0
    max_gap_min: float = 30.0
    max_accuracy_m: float = 1200.0
    max_speed_kmh: float = 90.0
    grid_size: int = 101
    # distances and delta
    delta: float = 1.0
    delta_grid: str = "0:1:0.05"
    delta_if_flat: float | None = 1.0
    min_size: int = 20
    # tuning and synthesis
    k_grid: str = "3:24:3"
    alpha_grid: str = "1:19:2"
    criterion: str = "elbow"
    threshold: float | None = None
    kernel: str = "exp"
    beta0: float = 1.0
    karcher_tol: float = 1e-4
    karcher_max_iter: int = 20
    # evaluation
    tests: str = "mean,cov,privacy"
    permutations: int = 500
    eval_karcher_tol: float = 1e-3
    eval_karcher_max_iter: int = 5
    seed: int = 42
    jobs: int = 1

    def policy(self):
        return FilterPolicy(self.min_points, self.max_gap_km * 1000.0, self.max_gap_min * 60.0,
                            self.max_accuracy_m, self.max_speed_kmh)

    def tuning_grid(self):
        return tuning.TuningGrid(tuple(parse_grid(self.k_grid, int)), tuple(parse_grid(self.alpha_grid)),
                                 self.criterion, self.threshold, self.seed)


PIPELINE_KEYS = tuple(f.name for f in fields(PipelineConfig))


class Manifest:
    def __init__(self, workdir):
        self.path = Path(workdir) / MANIFEST
        self.doc = {"format": "fdasynth-manifest", "version": 1, "stages": {}}
        if self.path.is_file():
            old = json.loads(self.path.read_text(encoding="utf-8"))
            if old.get("format") == "fdasynth-manifest" and old.get("version") == 1:
                self.doc = old

    def record(self, stage, inputs, outputs, config, seconds, summary):
        self.doc["stages"][stage] = {
            "inputs": {str(p): sha256(p) for p in inputs if Path(p).is_file()},
            "outputs": {str(p): sha256(p) for p in outputs if Path(p).is_file()},
            "config": config, "seconds": seconds, "summary": summary,
        }
        self.path.write_text(json.dumps(self.doc, indent=1, sort_keys=True), encoding="utf-8")


def _stage_range(cfg):
    for name in (cfg.from_stage, cfg.to_stage):
        if name not in STAGES:
            raise ValidationError(f"unknown stage {name!r}; stages are {', '.join(STAGES)}")
    a, b = STAGES.index(cfg.from_stage), STAGES.index(cfg.to_stage)
    if a > b:
        raise ValidationError(f"--from {cfg.from_stage} comes after --to {cfg.to_stage}")
    return STAGES[a:b + 1]


def run_pipeline(cfg: PipelineConfig):
    """Run a contiguous range of stages inside ``cfg.workdir``.

    ``cfg.input`` feeds the first stage (signals CSV for ingest, NDJSON for
    smooth, curves JSON for dist); later starting points read the artifacts of
    earlier stages from the work directory. Returns per-stage summaries.
    """
    stages = _stage_range(cfg)
    wd = Path(cfg.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    art = {k: wd / v for k, v in ARTIFACTS.items()}
    first = stages[0]
    if cfg.input is not None and first in ("ingest", "smooth", "dist"):
        entry = {"ingest": None, "smooth": "ingest", "dist": "smooth"}[first]
        if entry is not None:
            art[entry] = Path(cfg.input)
    elif first == "ingest":
        raise ValidationError("the ingest stage needs an input signals file")
    manifest = Manifest(wd)
    summaries = {}

    def delta_used():
        if "tune-delta" in summaries:
            return summaries["tune-delta"]["effective_delta"]
        return float(formats.read_json(_need(art["tune-delta"]))["effective_delta"])

    for stage in stages:
        t0 = time.perf_counter()
        log.info("stage %s", stage)
        try:
            if stage == "ingest":
                ins = [_need(cfg.input)]
                s = stage_ingest(cfg.input, art["ingest"], cfg.policy(), cfg.projection,
                                 cfg.orientation, rejects=wd / "rejects.json")
                outs = [art["ingest"], sidecar_path(art["ingest"]), wd / "rejects.json"]
                conf = {k: getattr(cfg, k) for k in ("projection", "orientation", "min_points",
                                                     "max_gap_km", "max_gap_min", "max_accuracy_m",
                                                     "max_speed_kmh")}
            elif stage == "smooth":
                ins = [art["ingest"], sidecar_path(art["ingest"])]
                s = stage_smooth(art["ingest"], art["smooth"], cfg.grid_size)
                outs, conf = [art["smooth"]], {"grid_size": cfg.grid_size}
            elif stage == "dist":
                ins = [art["smooth"]]
                s = stage_dist(art["smooth"], art["dist"], cfg.delta, cfg.jobs)
                outs, conf = [art["dist"]], {"delta": cfg.delta}
            elif stage == "tune-delta":
                ins = [art["dist"]]
                s = stage_tune_delta(art["dist"], art["tune-delta"], cfg.delta_grid, cfg.delta_if_flat)
                outs, conf = [art["tune-delta"]], {"grid": cfg.delta_grid,
                                                   "delta_if_flat": cfg.delta_if_flat}
            elif stage == "cluster":
                ins = [art["dist"], art["tune-delta"]]
                s = stage_cluster(art["dist"], art["cluster"], cfg.min_size, delta_used())
                outs, conf = [art["cluster"]], {"min_size": cfg.min_size}
            elif stage == "tune":
                ins = [art["smooth"], art["dist"], art["tune-delta"], art["cluster"]]
                grid = cfg.tuning_grid()
                s = stage_tune(art["smooth"], art["dist"], art["cluster"], art["tune"], grid,
                               _synth_base(cfg), delta_used(), cfg.jobs, emit_csv=wd / "tuning.csv")
                outs = [art["tune"], wd / "tuning.csv"]
                conf = {"k_grid": cfg.k_grid, "alpha_grid": cfg.alpha_grid,
                        "criterion": cfg.criterion, "threshold": cfg.threshold, "seed": cfg.seed}
            elif stage == "synth":
                ins = [art["smooth"], art["dist"], art["tune-delta"], art["tune"]]
                chosen = formats.read_json(_need(art["tune"])).get("chosen")
                if not chosen:
                    raise ValidationError("tuning found no satisfiable (K, alpha0) pair")
                scfg = SynthesisConfig(k=int(chosen[0]), alpha0=float(chosen[1]), kernel=cfg.kernel,
                                       beta0=cfg.beta0, delta=delta_used(), seed=cfg.seed,
                                       karcher_tol=cfg.karcher_tol,
                                       karcher_max_iter=cfg.karcher_max_iter)
                s = stage_synth(art["smooth"], art["dist"], art["synth"], scfg,
                                report_path=wd / "synth_report.json", jobs=cfg.jobs)
                outs, conf = [art["synth"], wd / "synth_report.json"], scfg.to_dict()
            else:
                ins = [art["smooth"], art["synth"], art["dist"], art["tune-delta"]]
                tests = [t.strip() for t in cfg.tests.split(",") if t.strip()]
                s = stage_eval(art["smooth"], art["synth"], art["eval"], tests, cfg.permutations,
                               cfg.seed, delta_used(), art["dist"], cfg.eval_karcher_tol,
                               cfg.eval_karcher_max_iter, cfg.jobs)
                outs = [art["eval"]]
                conf = {"tests": cfg.tests, "permutations": cfg.permutations, "seed": cfg.seed,
                        "karcher_tol": cfg.eval_karcher_tol,
                        "karcher_max_iter": cfg.eval_karcher_max_iter}
        except Exception as exc:
            exc.stage = stage
            raise
        seconds = time.perf_counter() - t0
        summaries[stage] = s
        manifest.record(stage, ins, outs, conf, seconds, s)
        log.info("stage %s done in %.1fs: %s", stage, seconds, s)
    return summaries


def config_dict(cfg: PipelineConfig):
    return asdict(cfg)
