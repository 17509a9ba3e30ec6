"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL verdict through the ``criterion`` fixture; the
verdicts are listed together in the terminal summary.
"""
import json
import time

import numpy as np
import pytest

from fdasynth import cli, elastic, evaluate, formats, karcher, kernels, pipeline, synthesis
from fdasynth.functional import Grid
from fdasynth.toy import ToyDataSpec, generate_toy
from fdasynth.tuning import TuningGrid
from conftest import exp_warp, smooth_curve
from oracles import PathTree


def _smooth(seed, m):
    return smooth_curve(np.random.default_rng(seed), m=m)


def test_01_srvf_roundtrip(criterion):
    t0 = time.perf_counter()
    err = {}
    for m in (101, 1001):
        worst = 0.0
        for s in range(50):
            f = _smooth(s, m)
            back = elastic.from_srvf(elastic.to_srvf(f), f[0])
            worst = max(worst, float(np.max(np.abs(back - f))))
        err[m] = worst
    secs = time.perf_counter() - t0
    ratio = err[101] / err[1001]
    ok = err[101] <= 5e-2 and ratio >= 5.0 and secs < 5.0
    criterion(1, ok, f"max err m=101 {err[101]:.3g}, m=1001 {err[1001]:.3g}, "
                     f"shrink {ratio:.1f}x, {secs:.2f}s")


def test_02_warping_isometry(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        q1 = elastic.to_srvf(smooth_curve(rng))
        q2 = elastic.to_srvf(smooth_curve(rng))
        gamma = exp_warp(rng.uniform(-2.0, 2.0))
        before = elastic.l2_norm(q1 - q2)
        after = elastic.l2_norm(elastic.warp_srvf(q1, gamma) - elastic.warp_srvf(q2, gamma))
        worst = max(worst, abs(after - before) / before)
    secs = time.perf_counter() - t0
    criterion(2, worst <= 2e-2 and secs < 5.0, f"max relative discrepancy {worst:.3g}, {secs:.2f}s")


def test_03_dp_matches_exhaustive_enumeration(criterion):
    t0 = time.perf_counter()
    steps = kernels.lattice_steps()
    tree = PathTree(15, steps)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(25):
        q1 = elastic.to_srvf(smooth_curve(rng, m=15))
        q2 = elastic.to_srvf(smooth_curve(rng, m=15))
        cost, _, _ = kernels.dp_align(np.ascontiguousarray(q1), np.ascontiguousarray(q2), steps)
        worst = max(worst, abs(cost - tree.min_cost(q1, q2)))
    secs = time.perf_counter() - t0
    criterion(3, worst <= 1e-9 and secs < 30.0,
              f"{tree.n_paths} paths, max |DP - brute force| {worst:.2g}, {secs:.1f}s")


def test_04_amplitude_semi_distance(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_warp = worst_self = worst_shift = 0.0
    for _ in range(50):
        f = smooth_curve(rng)
        q = elastic.to_srvf(f)
        g = elastic.warp_curve(f, exp_warp(rng.uniform(-1.5, 1.5)))
        worst_warp = max(worst_warp, elastic.amplitude_distance(q, elastic.to_srvf(g)) / elastic.l2_norm(q))
        worst_self = max(worst_self, elastic.amplitude_distance(q, q))
        shifted = elastic.to_srvf(f + rng.normal(scale=5.0, size=3))
        worst_shift = max(worst_shift, elastic.amplitude_distance(q, shifted))
    secs = time.perf_counter() - t0
    ok = worst_warp <= 0.05 and worst_self <= 1e-9 and worst_shift <= 1e-9 and secs < 20.0
    criterion(4, ok, f"D_a(f, f o gamma)/|q| max {worst_warp:.3g}, D_a(f,f) {worst_self:.2g}, "
                     f"D_a(f,f+c) {worst_shift:.2g}, {secs:.1f}s")


def test_05_phase_distance_closed_form(criterion):
    x = np.linspace(0.0, 1.0, 201)
    got = elastic.warping_phase(x ** 2)
    want = np.arccos(2.0 * np.sqrt(2.0) / 3.0)
    criterion(5, abs(got - want) <= 5e-3, f"D_p {got:.5f} vs {want:.5f}")


def test_06_dirichlet_machinery(criterion):
    t0 = time.perf_counter()
    alphas = np.array([2.0, 3.0, 2.0])
    rng = np.random.default_rng(6)
    draws = np.array([synthesis.sample_dirichlet(alphas, rng) for _ in range(100_000)])
    simplex = float(np.max(np.abs(draws.sum(axis=1) - 1.0)))
    nonneg = bool(np.all(draws >= 0))
    mean_err = float(np.max(np.abs(draws.mean(axis=0) - alphas / 7.0)))
    conc = 0.0
    for _ in range(1000):
        d = rng.uniform(0.0, 3.0, size=int(rng.integers(1, 30)))
        a0 = rng.uniform(1.0, 40.0)
        for kernel in synthesis.KERNELS:
            a, _ = synthesis.dirichlet_parameters(d, a0, kernel, beta0=0.5)
            conc = max(conc, abs(a.sum() - a0))
    secs = time.perf_counter() - t0
    ok = simplex <= 1e-12 and nonneg and mean_err <= 0.01 and conc <= 1e-9 and secs < 10.0
    criterion(6, ok, f"simplex residue {simplex:.2g}, mean error {mean_err:.4f}, "
                     f"|sum alpha - alpha0| {conc:.2g}, {secs:.1f}s")


def test_07_karcher_properties(criterion):
    rng = np.random.default_rng(7)
    q = elastic.to_srvf(smooth_curve(rng, m=51))
    single = karcher.weighted_karcher_mean([q], [1.0]).mean_srvf
    qs = [elastic.to_srvf(smooth_curve(rng, m=51)) for _ in range(3)]
    degen = karcher.weighted_karcher_mean(qs, [0.0, 0.0, 1.0]).mean_srvf
    f = smooth_curve(rng, m=51)
    rt = elastic.from_srvf(elastic.to_srvf(f), f[0])
    tol = float(np.max(np.abs(rt - f)))
    reproduce = (np.max(np.abs(elastic.from_srvf(single, f[0]) - elastic.from_srvf(q, f[0]))) <= tol
                 and np.max(np.abs(degen - qs[2])) <= 1e-12)
    worst_rise = -np.inf
    for _ in range(20):
        five = [elastic.to_srvf(smooth_curve(rng, m=51)) for _ in range(5)]
        trace = karcher.weighted_karcher_mean(five, rng.dirichlet(np.ones(5))).objective_trace
        if len(trace) > 1:
            worst_rise = max(worst_rise, float(np.max(np.diff(trace))))
    ok = reproduce and worst_rise <= 1e-9
    criterion(7, ok, f"single/degenerate reproduce inputs: {reproduce}, "
                     f"largest objective step {worst_rise:.3g}")


def test_08_delta_endpoints(criterion):
    rng = np.random.default_rng(8)
    qs = [elastic.to_srvf(smooth_curve(rng, m=41)) for _ in range(6)]
    one, zero = elastic.distance_matrix(qs, 1.0), elastic.distance_matrix(qs, 0.0)
    ok = (np.array_equal(one.combined, one.amplitude) and np.array_equal(zero.combined, zero.phase)
          and not np.array_equal(one.amplitude, zero.phase))
    criterion(8, ok, "delta=1 -> amplitude, delta=0 -> phase, elementwise exact")


# ---- end-to-end toy experiment (criteria 9 and 11) ---------------------------

# toygen already emits curves, so the run starts at dist and writes the six downstream artifacts
PRODUCED = [pipeline.ARTIFACTS[s] for s in pipeline.STAGES[pipeline.STAGES.index("dist"):]]
TOY_FLAGS = ["--k-grid", "3,6", "--alpha-grid", "1,3,5,7", "--permutations", "200"]


def _run_toy(workdir, toy):
    t0 = time.perf_counter()
    code = cli.main(["--seed", "7", "pipeline", "--workdir", str(workdir), "--input", str(toy),
                     "--from", "dist", *TOY_FLAGS])
    return code, time.perf_counter() - t0


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("e2e")
    toy = d / "toy.json"
    assert cli.main(["--seed", "7", "toygen", "--clusters", "3", "--per-cluster", "20",
                     "--output", str(toy)]) == 0
    code, secs = _run_toy(d / "run1", toy)
    return {"dir": d, "toy": toy, "wd": d / "run1", "code": code, "seconds": secs}


def test_09_end_to_end_toy_pipeline(criterion, toy_run):
    wd = toy_run["wd"]
    assert toy_run["code"] == 0
    orig = formats.read_curves(toy_run["toy"])
    synth = formats.read_curves(wd / pipeline.ARTIFACTS["synth"])
    ev = json.loads((wd / pipeline.ARTIFACTS["eval"]).read_text())["tests"]
    ratio = ev["privacy"]["ratio"]
    p_mean = ev["mean"]["p_value"]
    code2, _ = _run_toy(toy_run["dir"] / "run2", toy_run["toy"])
    missing = [n for n in PRODUCED if not (wd / n).is_file()]
    differing = [n for n in PRODUCED
                 if (wd / n).read_bytes() != (toy_run["dir"] / "run2" / n).read_bytes()]
    secs = toy_run["seconds"]
    ok = (len(synth) == len(orig) and ratio >= 1.0 and p_mean > 0.05 and code2 == 0
          and not missing and not differing and secs < 600.0)
    criterion(9, ok, f"{len(synth)}/{len(orig)} curves, privacy ratio {ratio:.3f}, "
                     f"mean-test p {p_mean:.3f}, rerun differs in {differing or 'nothing'}, "
                     f"{secs:.0f}s on 1 core")


def test_10_permutation_calibration(criterion):
    t0 = time.perf_counter()
    ds = generate_toy(ToyDataSpec(3, 20, 0.05, 7), Grid(31))
    rng = np.random.default_rng(10)
    pvals = []
    for run in range(20):
        idx = rng.permutation(len(ds))
        res = evaluate.mean_permutation_test(ds.subset(np.sort(idx[:30])), ds.subset(np.sort(idx[30:])),
                                             n_perm=99, seed=1000 + run, karcher_tol=1e-3,
                                             karcher_max_iter=2)
        pvals.append(res.p_value)
    rejections = sum(p <= 0.05 for p in pvals)
    secs = time.perf_counter() - t0
    criterion(10, rejections <= 2, f"{rejections}/20 rejections at 0.05 "
                                   f"(min p {min(pvals):.2f}), {secs:.0f}s")


def test_11_tuning_coherence(criterion, toy_run):
    wd = toy_run["wd"]
    elbow = json.loads((wd / pipeline.ARTIFACTS["tune"]).read_text())
    labels = pipeline.read_labels(wd / pipeline.ARTIFACTS["cluster"])
    sum_sq = int(sum(s * s for s in labels.sizes))
    delta = json.loads((wd / pipeline.ARTIFACTS["tune-delta"]).read_text())["effective_delta"]
    grid = TuningGrid((3, 6), (1.0, 3.0, 5.0, 7.0), "threshold", None, 7)
    pipeline.stage_tune(toy_run["toy"], wd / pipeline.ARTIFACTS["dist"],
                        wd / pipeline.ARTIFACTS["cluster"], wd / "tuning_threshold.json", grid,
                        synthesis.SynthesisConfig(), delta)
    thresh = json.loads((wd / "tuning_threshold.json").read_text())
    checks = []
    for rep in (elbow, thresh):
        i1 = np.array([v for row in rep["I1"] for v in row], dtype=float)
        i2 = np.array([v for v in rep["I2"] if v is not None], dtype=float)
        defined = rep["chosen"] is not None or any("unsatisfiable" in w for w in rep["warnings"])
        checks.append((bool(np.all(i1 >= 0)), bool(np.all((i2 >= 0) & (i2 <= 1))),
                       len(rep["d1_computations"]) == len(rep["k_values"]) * len(rep["alpha_values"])
                       and all(c == sum_sq for c in rep["d1_computations"]),
                       defined))
    ok = all(all(c) for c in checks)
    criterion(11, ok, f"elbow chose {elbow['chosen']}, threshold chose {thresh['chosen']}, "
                      f"D1 count per grid point {sorted(set(elbow['d1_computations']))} vs "
                      f"sum Ng^2 {sum_sq} over sizes {labels.sizes}; "
                      f"checks {checks}")


def test_12_format_fidelity(criterion, tmp_path):
    rng = np.random.default_rng(12)
    amp = rng.uniform(0, 3, (9, 9))
    amp = amp + amp.T
    np.fill_diagonal(amp, 0.0)
    ph = np.abs(rng.normal(size=(9, 9)))
    ph = ph + ph.T
    np.fill_diagonal(ph, 0.0)
    dm = elastic.DistanceMatrix(amp, ph, 0.35)
    formats.write_distance(dm, tmp_path / "d.bin")
    back = formats.read_distance(tmp_path / "d.bin")
    blob = (tmp_path / "d.bin").read_bytes()
    formats.write_distance(back, tmp_path / "d2.bin")
    dist_ok = (np.array_equal(back.amplitude, amp) and np.array_equal(back.phase, ph)
               and back.delta == 0.35 and (tmp_path / "d2.bin").read_bytes() == blob)
    ds = generate_toy(ToyDataSpec(2, 5, 0.1, 12), Grid(37))
    formats.write_curves(ds, tmp_path / "c.json")
    ds2 = formats.read_curves(tmp_path / "c.json")
    a, b = ds.values(), ds2.values()
    ulps = float(np.max(np.abs(a - b) / np.spacing(np.abs(a)).clip(min=np.finfo(float).tiny)))
    curves_ok = ulps <= 1.0 and [c.id for c in ds.curves] == [c.id for c in ds2.curves]
    criterion(12, dist_ok and curves_ok, f"distance file bit-exact: {dist_ok}, "
                                         f"curve JSON max drift {ulps:.0f} ulp")
