"""Shared independent oracles for the test suite.

These never call into the learned-model code paths they are used to check.
"""

import numpy as np


def expectile_bisect(samples, tau, lo=None, hi=None, iters=200):
    """Scalar tau-expectile by bisection on the first-order condition.

    The expectile m solves sum_i |tau - 1(x_i < m)| (x_i - m) = 0; the left
    side is strictly decreasing in m.
    """
    samples = np.asarray(samples, dtype=np.float64)
    lo = samples.min() if lo is None else lo
    hi = samples.max() if hi is None else hi

    def slope(m):
        w = np.where(samples < m, 1.0 - tau, tau)
        return float(np.sum(w * (samples - m)))

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def set_constant_output(net, value):
    """Zero all parameters, then pin the final bias so the net outputs value."""
    net.set_flat(np.zeros(net.n_params))
    net.biases[-1][:] = value


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
