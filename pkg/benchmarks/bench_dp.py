"""Time the compiled alignment kernel against the numpy fallback.

    python benchmarks/bench_dp.py [--sizes 31,51,101,201] [--pairs 20]

Also checks that both backends agree bit for bit on every pair.
"""
import argparse
import time

import numpy as np

from fdasynth import _dp_py
from fdasynth.elastic import to_srvf
from fdasynth.kernels import STEPS

try:
    from fdasynth import _dp as _dp_c
except ImportError:
    _dp_c = None


def _pairs(m, n, seed=0):
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, m)
    out = []
    for _ in range(n):
        qs = []
        for _ in range(2):
            f = np.outer(x, rng.normal(size=3))
            for k in range(1, 5):
                f += np.outer(np.sin(np.pi * k * x), rng.normal(size=3) / k)
            qs.append(np.ascontiguousarray(to_srvf(f)))
        out.append(qs)
    return out


def _time(fn, pairs, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for q1, q2 in pairs:
            fn(q1, q2, STEPS)
        best = min(best, time.perf_counter() - t0)
    return best / len(pairs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="31,51,101,201")
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'m':>5} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}  identical")
    for m in (int(s) for s in args.sizes.split(",")):
        pairs = _pairs(m, args.pairs)
        t_py = _time(_dp_py.dp_align, pairs, args.repeat)
        if _dp_c is None:
            print(f"{m:>5} {t_py * 1e3:>10.2f} {'n/a':>10} {'':>8}  (extension not built)")
            continue
        t_c = _time(_dp_c.dp_align, pairs, args.repeat)
        same = all(
            all(np.array_equal(a, b) for a, b in zip(_dp_py.dp_align(q1, q2, STEPS),
                                                     _dp_c.dp_align(q1, q2, STEPS)))
            for q1, q2 in pairs)
        print(f"{m:>5} {t_py * 1e3:>10.2f} {t_c * 1e3:>10.2f} {t_py / t_c:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
