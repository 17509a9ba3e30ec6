"""Backend selection for the alignment kernel.

The compiled Cython extension is used when it imports; otherwise the numpy
implementation takes over. Set ``FDASYNTH_BACKEND=python`` to force the
fallback. Both backends return bit-identical results.
"""
import os
from math import gcd

import numpy as np

from fdasynth import _dp_py

NEIGHBORHOOD = 5


def lattice_steps(neighborhood=NEIGHBORHOOD):
    """Admissible DP moves: coprime (di, dj) up to ``neighborhood`` cells.

    The diagonal comes first so it wins exact ties; the rest are ordered by
    length.
    """
    rest = [(a, b) for a in range(1, neighborhood + 1) for b in range(1, neighborhood + 1)
            if gcd(a, b) == 1 and (a, b) != (1, 1)]
    rest.sort(key=lambda s: (max(s), s))
    return np.array([(1, 1)] + rest, dtype=np.int_)


STEPS = lattice_steps()

BACKEND = "python"
_kernel = _dp_py.dp_align

if os.environ.get("FDASYNTH_BACKEND", "").lower() != "python":
    try:
        from fdasynth._dp import dp_align as _kernel  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass


def dp_align(q1, q2, steps=None):
    """Run the selected backend; ``q1``/``q2`` are contiguous ``(m, p)`` arrays."""
    steps = STEPS if steps is None else np.ascontiguousarray(steps, dtype=np.int_)
    return _kernel(q1, q2, steps)


__all__ = ["BACKEND", "STEPS", "dp_align", "lattice_steps"]
