# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dynamic-programming alignment kernel.

Mirrors :mod:`fdasynth._dp_py` operation for operation; both backends give
bit-identical costs and paths on the same inputs.
"""
import numpy as np

from libc.math cimport sqrt, INFINITY

from fdasynth._dp_common import prepare, step_tables


def dp_align(const double[:, ::1] q1, const double[:, ::1] q2, const long[:, ::1] steps):
    """Optimal lattice warping of ``q2`` onto ``q1``.

    ``steps`` is an ``(S, 2)`` array of admissible ``(di, dj)`` moves, tried in
    order (earlier wins exact ties). Returns ``(cost, path_i, path_j)``.
    """
    cdef Py_ssize_t m = q1.shape[0]
    if q2.shape[0] != m or q2.shape[1] != q1.shape[1]:
        raise ValueError("q1 and q2 must share shape")
    if m < 2:
        raise ValueError("need at least two grid points")
    cdef Py_ssize_t nsteps = steps.shape[0]
    cdef double h = 1.0 / <double>(m - 1)

    steps_t = tuple((int(a), int(b)) for a, b in np.asarray(steps))
    gram_arr, q1_arr, q2_arr = prepare(np.asarray(q1), np.asarray(q2), steps_t)
    start_arr, _, a_arr, f_arr, w_arr = step_tables(steps_t, m)[:5]
    cdef const Py_ssize_t[::1] tstart = start_arr
    cdef const Py_ssize_t[::1] ta = a_arr
    cdef const double[::1] tf = f_arr
    cdef const double[::1] tw = w_arr
    cdef const double[:, ::1] gram = gram_arr
    cdef const double[:, ::1] q1_tab = q1_arr
    cdef const double[:, ::1] q2_tab = q2_arr
    roots_arr = np.sqrt(np.asarray(steps)[:, 1] / np.asarray(steps)[:, 0])
    cdef const double[::1] roots = roots_arr

    energy_arr = np.full((m, m), np.inf)
    pred_arr = np.full((m, m), -1, dtype=np.intp)
    cdef double[:, ::1] energy = energy_arr
    cdef Py_ssize_t[:, ::1] pred = pred_arr
    cdef Py_ssize_t i, j, k, l, s, r, t, a, di, dj, best_s
    cdef double best, cand, prev, cross, g, f, w, seg
    with nogil:
        energy[0, 0] = 0.0
        for i in range(1, m):
            for j in range(1, m):
                best = INFINITY
                best_s = -1
                for s in range(nsteps):
                    di = steps[s, 0]
                    dj = steps[s, 1]
                    k = i - di
                    l = j - dj
                    if k < 0 or l < 0:
                        continue
                    prev = energy[k, l]
                    if prev == INFINITY:
                        continue
                    cross = 0.0
                    r = 0
                    for t in range(tstart[s], tstart[s + 1]):
                        a = ta[t]
                        f = tf[t]
                        if f > 0.0:
                            g = (1.0 - f) * gram[k + r, l + a] + f * gram[k + r, l + a + 1]
                        else:
                            g = gram[k + r, l + a]
                        cross = cross + tw[t] * g
                        r = r + 1
                    seg = q1_tab[di, k] + q2_tab[s, l] - 2.0 * roots[s] * cross
                    cand = prev + seg * h
                    if cand < best:
                        best = cand
                        best_s = s
                energy[i, j] = best
                pred[i, j] = best_s

    path_i = [m - 1]
    path_j = [m - 1]
    i = m - 1
    j = m - 1
    while i > 0 or j > 0:
        s = pred[i, j]
        i -= steps[s, 0]
        j -= steps[s, 1]
        path_i.append(i)
        path_j.append(j)
    path_i.reverse()
    path_j.reverse()
    return (float(energy[m - 1, m - 1]), np.asarray(path_i, dtype=np.intp),
            np.asarray(path_j, dtype=np.intp))
