import os
import subprocess
import sys

import numpy as np
import pytest

from fdasynth import _dp_py, kernels
from fdasynth.elastic import to_srvf
from oracles import PathTree, segment_cost

from conftest import smooth_curve


def test_steps_start_with_diagonal_and_are_coprime():
    steps = kernels.lattice_steps(5)
    assert tuple(steps[0]) == (1, 1)
    assert len(steps) == 19
    assert all(np.gcd(a, b) == 1 for a, b in steps)
    assert len({tuple(s) for s in steps}) == len(steps)


def test_small_neighborhood_matches_classic_moves():
    assert {tuple(s) for s in kernels.lattice_steps(2)} == {(1, 1), (1, 2), (2, 1)}


@pytest.mark.parametrize("seed", range(3))
def test_dp_matches_exhaustive_small(seed):
    rng = np.random.default_rng(seed)
    steps = kernels.lattice_steps(3)
    tree = PathTree(9, steps)
    q1, q2 = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
    cost, _, _ = kernels.dp_align(q1, q2, steps)
    assert cost == pytest.approx(tree.min_cost(q1, q2), abs=1e-12)


def test_path_cost_equals_sum_of_segments(rng):
    q1, q2 = rng.normal(size=(31, 3)), rng.normal(size=(31, 3))
    cost, pi, pj = kernels.dp_align(q1, q2)
    assert pi[0] == pj[0] == 0 and pi[-1] == pj[-1] == 30
    assert np.all(np.diff(pi) > 0) and np.all(np.diff(pj) > 0)
    total = sum(segment_cost(q1, q2, pi[n], pj[n], pi[n + 1] - pi[n], pj[n + 1] - pj[n])
                for n in range(len(pi) - 1))
    assert cost == pytest.approx(total, rel=1e-12)


def test_identical_inputs_take_the_diagonal(rng):
    q = to_srvf(smooth_curve(rng, m=41))
    cost, pi, pj = kernels.dp_align(q, q)
    assert cost == pytest.approx(0.0, abs=1e-12)
    assert np.array_equal(pi, pj)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")
@pytest.mark.parametrize("m", [7, 15, 64, 101])
def test_backends_bit_identical(m):
    rng = np.random.default_rng(m)
    for _ in range(5):
        q1 = np.ascontiguousarray(to_srvf(smooth_curve(rng, m=m)))
        q2 = np.ascontiguousarray(to_srvf(smooth_curve(rng, m=m)))
        c1, i1, j1 = kernels.dp_align(q1, q2)
        c2, i2, j2 = _dp_py.dp_align(q1, q2, kernels.STEPS)
        assert c1 == c2
        assert np.array_equal(i1, i2) and np.array_equal(j1, j2)


def test_backend_override_env():
    code = "from fdasynth import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, FDASYNTH_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
