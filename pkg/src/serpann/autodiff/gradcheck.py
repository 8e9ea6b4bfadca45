"""Central finite differences, used to audit backward rules."""

import numpy as np


def numerical_grad(f, array, coords, h=1e-5):
    """Central-difference estimate of ``d f() / d array[c]`` for each ``c``.

    ``f`` must read ``array`` (mutated in place here and restored) and
    return a float.  Run it in float64 for meaningful estimates.
    """
    flat = array.reshape(-1)
    out = np.empty(len(coords), dtype=np.float64)
    for i, c in enumerate(coords):
        orig = flat[c]
        flat[c] = orig + h
        up = float(f())
        flat[c] = orig - h
        down = float(f())
        flat[c] = orig
        out[i] = (up - down) / (2 * h)
    return out


def relative_error(analytic, numeric, floor=1e-7):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def sample_coords(size, k, rng):
    """Up to ``k`` distinct flat indices, drawn with a :class:`Prng`."""
    if size <= k:
        return list(range(size))
    idx = list(range(size))
    chosen = []
    for i in range(k):
        j = rng.randint(i, size - 1)
        idx[i], idx[j] = idx[j], idx[i]
        chosen.append(idx[i])
    return chosen
