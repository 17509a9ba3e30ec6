"""``fdasynth`` command line.

Exit codes: 0 success, 1 validation error (bad input, missing file, bad
flag), 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from fdasynth import __version__, pipeline
from fdasynth.errors import NumericalError, ValidationError
from fdasynth.ingest import FilterPolicy
from fdasynth.synthesis import KERNELS, SynthesisConfig
from fdasynth.toy import ToyDataSpec
from fdasynth.tuning import TuningGrid

log = logging.getLogger("fdasynth")
GLOBAL_KEYS = ("config", "seed", "jobs", "log_level")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _opt_float(text):
    return None if str(text).lower() in ("", "none") else float(text)


def _add_globals(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int, default=d(42))
    p.add_argument("--jobs", type=int, default=d(1))
    p.add_argument("--log-level", default=d("INFO"))


def build_parser():
    root = _Parser(prog="fdasynth", description="Elastic functional synthesis of GPS trajectories.")
    root.add_argument("--version", action="version", version=f"fdasynth {__version__}")
    _add_globals(root, suppress=False)
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        return p

    fp = FilterPolicy()
    p = cmd("ingest", "parse, project, filter and normalize a GPS signal CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-points", type=int, default=fp.min_points)
    p.add_argument("--max-gap-km", type=float, default=fp.max_gap_space / 1000.0)
    p.add_argument("--max-gap-min", type=float, default=fp.max_gap_time / 60.0)
    p.add_argument("--max-accuracy-m", type=float, default=fp.max_accuracy)
    p.add_argument("--max-speed-kmh", type=float, default=fp.max_speed)
    p.add_argument("--projection", choices=("local", "tmerc"), default="local")
    p.add_argument("--orientation", "--normalize-orientation", dest="orientation",
                   choices=("max0", "min0"), default="max0")
    p.add_argument("--rejects")

    p = cmd("smooth", "spline-smooth normalized trajectories onto a grid")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--norm", help="normalization sidecar (default: next to the input)")

    p = cmd("dist", "pairwise amplitude/phase distance matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--delta", type=float, default=1.0)

    p = cmd("tune-delta", "cophenetic sweep over the mixing weight")
    p.add_argument("--dist", required=True)
    p.add_argument("--grid", default="0:1:0.05")
    p.add_argument("--output", required=True)
    p.add_argument("--delta-if-flat", type=_opt_float, default=None,
                   help="delta to use when the sweep is flat")

    p = cmd("cluster", "complete linkage with a dynamic cut")
    p.add_argument("--dist", required=True)
    p.add_argument("--min-size", type=int, default=20)
    p.add_argument("--delta", type=_opt_float, default=None, help="re-mix the matrix first")
    p.add_argument("--output", required=True)

    p = cmd("tune", "two-phase (K, alpha0) search")
    p.add_argument("--curves", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k-grid", default="3:24:3")
    p.add_argument("--alpha-grid", default="1:19:2")
    p.add_argument("--criterion", choices=("elbow", "threshold"), default="elbow")
    p.add_argument("--threshold", type=_opt_float, default=None)
    p.add_argument("--delta", type=_opt_float, default=None)
    p.add_argument("--kernel", choices=KERNELS, default="exp")
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.add_argument("--emit-csv")

    p = cmd("synth", "generate one synthetic twin per curve")
    p.add_argument("--curves", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--alpha0", type=float, default=7.0)
    p.add_argument("--kernel", choices=KERNELS, default="exp")
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--delta", type=_opt_float, default=None)
    p.add_argument("--karcher-tol", type=float, default=1e-4)
    p.add_argument("--karcher-max-iter", type=int, default=20)
    p.add_argument("--output", required=True)
    p.add_argument("--report")

    p = cmd("eval", "permutation tests and privacy audit")
    p.add_argument("--orig", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--tests", default="mean,cov,privacy")
    p.add_argument("--permutations", type=int, default=500)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--dist", help="original distance matrix, skips recomputation for the audit")
    p.add_argument("--karcher-tol", type=float, default=1e-3)
    p.add_argument("--karcher-max-iter", type=int, default=5)
    p.add_argument("--output", required=True)
    p.add_argument("--emit-csv", help="directory for plot-ready CSVs")

    p = cmd("heatmap", "hexagonal visit counts")
    p.add_argument("--curves", required=True)
    p.add_argument("--norm")
    p.add_argument("--diagonal-km", type=float, default=0.5774)
    p.add_argument("--samples", type=int, default=25)
    p.add_argument("--output", required=True)

    p = cmd("toygen", "seeded toy curve dataset")
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--per-cluster", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--trips-per-user", type=int, default=2)
    p.add_argument("--trip-jitter", type=float, default=0.1)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--output", required=True)
    p.add_argument("--signals", help="also write a GPS signal CSV of the same curves")

    p = cmd("pipeline", "run stages end to end")
    defaults = pipeline.PipelineConfig()
    for key in pipeline.PIPELINE_KEYS:
        if key in ("seed", "jobs"):
            continue
        flag = "--" + {"from_stage": "from", "to_stage": "to"}.get(key, key).replace("_", "-")
        val = getattr(defaults, key)
        if key in ("from_stage", "to_stage"):
            p.add_argument(flag, dest=key, choices=pipeline.STAGES, default=val)
        elif key in ("delta_if_flat", "threshold", "input"):
            p.add_argument(flag, dest=key, type=_opt_float if key != "input" else str, default=val)
        else:
            p.add_argument(flag, dest=key, type=type(val), default=val)
    return root


def _subparser(root, name):
    for action in root._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config(path):
    """Flat ``key = value`` file; ``#`` comments; keys use dashes or underscores."""
    out = {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {path}")
    for n, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _known_keys(root):
    keys = set(GLOBAL_KEYS)
    for action in root._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                keys.update(a.dest for a in sp._actions if a.dest != "help")
    return keys


def parse_args(argv):
    root = build_parser()
    args = root.parse_args(argv)
    if args.config:
        conf = read_config(args.config)
        conf = {{"from": "from_stage", "to": "to_stage"}.get(k, k): v for k, v in conf.items()}
        unknown = sorted(set(conf) - _known_keys(root))
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
        sp = _subparser(root, args.command)
        own = {a.dest: a for a in sp._actions}
        # config values become defaults so explicit flags still win
        sp.set_defaults(**{k: v for k, v in conf.items() if k in own and k not in GLOBAL_KEYS})
        root.set_defaults(**{k: v for k, v in conf.items() if k in ("seed", "jobs", "log_level")})
        args = root.parse_args(argv)
        for k, v in conf.items():
            if k in ("seed", "jobs") and isinstance(getattr(args, k), str):
                setattr(args, k, int(getattr(args, k)))
    return args


def run(args):
    c = args.command
    if c == "ingest":
        policy = FilterPolicy(args.min_points, args.max_gap_km * 1000.0, args.max_gap_min * 60.0,
                              args.max_accuracy_m, args.max_speed_kmh)
        return pipeline.stage_ingest(args.input, args.output, policy, args.projection,
                                     args.orientation, args.rejects)
    if c == "smooth":
        return pipeline.stage_smooth(args.input, args.output, args.grid_size, args.norm)
    if c == "dist":
        return pipeline.stage_dist(args.input, args.output, args.delta, args.jobs)
    if c == "tune-delta":
        return pipeline.stage_tune_delta(args.dist, args.output, args.grid, args.delta_if_flat)
    if c == "cluster":
        return pipeline.stage_cluster(args.dist, args.output, args.min_size, args.delta)
    if c == "tune":
        grid = TuningGrid(tuple(pipeline.parse_grid(args.k_grid, int)),
                          tuple(pipeline.parse_grid(args.alpha_grid)), args.criterion,
                          args.threshold, args.seed)
        base = SynthesisConfig(kernel=args.kernel, beta0=args.beta0)
        return pipeline.stage_tune(args.curves, args.dist, args.labels, args.output, grid, base,
                                   args.delta, args.jobs, args.emit_csv)
    if c == "synth":
        delta = args.delta
        if delta is None:
            delta = pipeline.formats.read_distance(pipeline._need(args.dist)).delta
        cfg = SynthesisConfig(k=args.k, alpha0=args.alpha0, kernel=args.kernel, beta0=args.beta0,
                              delta=delta, seed=args.seed, karcher_tol=args.karcher_tol,
                              karcher_max_iter=args.karcher_max_iter)
        return pipeline.stage_synth(args.curves, args.dist, args.output, cfg, args.report, args.jobs)
    if c == "eval":
        tests = [t.strip() for t in args.tests.split(",") if t.strip()]
        return pipeline.stage_eval(args.orig, args.synth, args.output, tests, args.permutations,
                                   args.seed, args.delta, args.dist, args.karcher_tol,
                                   args.karcher_max_iter, args.jobs, args.emit_csv)
    if c == "heatmap":
        return pipeline.stage_heatmap(args.curves, args.output, args.norm, args.diagonal_km,
                                      args.samples)
    if c == "toygen":
        spec = ToyDataSpec(args.clusters, args.per_cluster, args.noise, args.seed,
                           args.trips_per_user, args.trip_jitter)
        return pipeline.stage_toygen(args.output, spec, args.grid_size, args.signals)
    if c == "pipeline":
        cfg = pipeline.PipelineConfig(**{k: getattr(args, k) for k in pipeline.PIPELINE_KEYS})
        return pipeline.run_pipeline(cfg)
    raise ValidationError(f"unknown command {c!r}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        logging.getLogger().setLevel(str(args.log_level).upper())
        summary = run(args)
        log.info("%s: %s", args.command, summary)
        return 0
    except (ValidationError, ValueError, OSError) as exc:
        stage = getattr(exc, "stage", None)
        print(f"fdasynth: error{f' in stage {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        stage = getattr(exc, "stage", None)
        print(f"fdasynth: numerical failure{f' in stage {stage}' if stage else ''}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
