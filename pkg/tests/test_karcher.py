import numpy as np
import pytest

from fdasynth.elastic import from_srvf, l2_norm, to_srvf
from fdasynth.karcher import unweighted_mean, weighted_karcher_mean
from conftest import smooth_curve


def test_single_input_is_returned_exactly(rng):
    q = to_srvf(smooth_curve(rng))
    res = weighted_karcher_mean([q], [1.0])
    assert np.array_equal(res.mean_srvf, q)
    assert res.objective_trace == [0.0]


def test_degenerate_weights_select_one_input(rng):
    qs = [to_srvf(smooth_curve(rng)) for _ in range(3)]
    res = weighted_karcher_mean(qs, [0.0, 1.0, 0.0])
    assert np.array_equal(res.mean_srvf, qs[1])


def test_identical_inputs(rng):
    q = to_srvf(smooth_curve(rng))
    res = weighted_karcher_mean([q, q, q], [0.2, 0.3, 0.5])
    assert np.max(np.abs(res.mean_srvf - q)) < 1e-12
    assert res.objective_trace[-1] < 1e-20


def test_scaled_copies_average_their_scales(rng):
    # c_k q share a shape, so identity alignment is optimal and the mean is (sum w c) q
    q = to_srvf(smooth_curve(rng))
    c = np.array([0.5, 1.0, 2.0])
    w = np.array([0.2, 0.5, 0.3])
    res = weighted_karcher_mean([ck * q for ck in c], w)
    assert l2_norm(res.mean_srvf - (w @ c) * q) <= 1e-9 * l2_norm(q)


def test_objective_trace_is_non_increasing(rng):
    qs = [to_srvf(smooth_curve(rng, m=51)) for _ in range(5)]
    res = weighted_karcher_mean(qs, np.full(5, 0.2))
    assert np.all(np.diff(res.objective_trace) <= 1e-9)
    assert len(res.objective_trace) == res.iterations + 1


def test_ids_make_the_mean_order_invariant(rng):
    qs = [to_srvf(smooth_curve(rng, m=41)) for _ in range(4)]
    w = np.array([0.1, 0.2, 0.3, 0.4])
    ids = ["a", "b", "c", "d"]
    perm = [2, 0, 3, 1]
    a = weighted_karcher_mean(qs, w, ids=ids)
    b = weighted_karcher_mean([qs[k] for k in perm], w[perm], ids=[ids[k] for k in perm])
    assert np.array_equal(a.mean_srvf, b.mean_srvf)


def test_mean_curve_lies_between_inputs(rng):
    f = smooth_curve(rng)
    res = unweighted_mean([to_srvf(f), to_srvf(f + 0.0)])
    assert np.max(np.abs(from_srvf(res.mean_srvf, f[0]) - f)) < 5e-2


@pytest.mark.parametrize("weights", [[0.5, 0.6], [-0.1, 1.1], [0.0, 0.0]])
def test_invalid_weights(rng, weights):
    qs = [to_srvf(smooth_curve(rng, m=21)) for _ in range(2)]
    with pytest.raises(ValueError):
        weighted_karcher_mean(qs, weights)


def test_empty_input():
    with pytest.raises(ValueError):
        unweighted_mean([])
