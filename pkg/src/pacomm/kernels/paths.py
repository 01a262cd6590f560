"""Sequential kernel for the Bernoulli-increment degree process."""

import numpy as np

from .._backend import njit, select


def _tilde_y(tau, T, m, theta, uniforms):
    """Run Y~ from ``Y~_tau = m`` to ``T``.

    Returns ``(values, zeta)``; ``zeta`` is the first time with
    ``theta * Y~_t > t`` (the path stops there) or ``-1`` if none.
    """
    n = T - tau + 1
    values = np.empty(n, dtype=np.int64)
    y = m
    values[0] = y
    for i in range(n - 1):
        t = tau + i
        p = theta * y / t
        if p > 1.0:
            return values[: i + 1], t
        if uniforms[i] < p:
            y += 1
        values[i + 1] = y
    if theta * y > T:
        return values, T
    return values, -1


tilde_y_numba = njit(_tilde_y)
tilde_y_python = _tilde_y
tilde_y = select(tilde_y_numba, tilde_y_python)
