"""Pure numpy dynamic-programming alignment kernel (fallback backend)."""
import numpy as np

from fdasynth._dp_common import prepare, step_offsets


def dp_align(q1, q2, steps):
    """Optimal lattice warping of ``q2`` onto ``q1``.

    Same contract as the compiled kernel: returns ``(cost, path_i, path_j)``.
    """
    q1 = np.ascontiguousarray(q1, dtype=float)
    q2 = np.ascontiguousarray(q2, dtype=float)
    if q1.shape != q2.shape:
        raise ValueError("q1 and q2 must share shape")
    m = q1.shape[0]
    if m < 2:
        raise ValueError("need at least two grid points")
    steps_arr = np.asarray(steps)
    steps = [(int(di), int(dj)) for di, dj in steps_arr]
    h = 1.0 / (m - 1)
    gram, q1_tab, q2_tab = prepare(q1, q2, steps_arr)
    roots = np.sqrt(steps_arr[:, 1] / steps_arr[:, 0])

    # seg[s][k, l]: cost of the move leaving node (k, l) with step s
    segs = []
    for s, (di, dj) in enumerate(steps):
        nk, nl = m - di, m - dj
        if nk <= 0 or nl <= 0:
            segs.append(None)
            continue
        cross = np.zeros((nk, nl))
        for r, (a, f, w) in enumerate(step_offsets(di, dj)):
            if f > 0.0:
                g = (1.0 - f) * gram[r:r + nk, a:a + nl] + f * gram[r:r + nk, a + 1:a + 1 + nl]
            else:
                g = gram[r:r + nk, a:a + nl]
            cross = cross + w * g
        segs.append(q1_tab[di, :nk, None] + q2_tab[s, None, :nl] - 2.0 * roots[s] * cross)

    energy = np.full((m, m), np.inf)
    pred = np.full((m, m), -1, dtype=np.intp)
    energy[0, 0] = 0.0
    for i in range(1, m):
        best = np.full(m - 1, np.inf)
        best_s = np.full(m - 1, -1, dtype=np.intp)
        for s, (di, dj) in enumerate(steps):
            if i - di < 0 or segs[s] is None:
                continue
            # end nodes j = dj..m-1 live at best[j - 1]
            cand = energy[i - di, 0:m - dj] + segs[s][i - di, :] * h
            view = best[dj - 1:]
            better = cand < view
            view[better] = cand[better]
            best_s[dj - 1:][better] = s
        energy[i, 1:] = best
        pred[i, 1:] = best_s

    path_i, path_j = [m - 1], [m - 1]
    i = j = m - 1
    while i > 0 or j > 0:
        di, dj = steps[pred[i, j]]
        i -= di
        j -= dj
        path_i.append(i)
        path_j.append(j)
    return (float(energy[m - 1, m - 1]), np.asarray(path_i[::-1], dtype=np.intp),
            np.asarray(path_j[::-1], dtype=np.intp))
