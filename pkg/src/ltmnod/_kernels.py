"""Compiled RK4 kernels for the opinion dynamics.

States are ``(n, m)`` arrays: ``m`` independent runs on the same instance
advance together.  The weight matrix arrives in CSR form.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def rhs_into(indptr, indices, data, mu, k, gamma, b, z, out):
    n, m = z.shape
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        for c in range(m):
            acc = 0.0
            for p in range(lo, hi):
                acc += data[p] * z[indices[p], c]
            zi = z[i, c]
            x = mu[i] * zi + k * zi * zi + gamma * acc + b[i]
            if x < 0.0:
                x = 0.0
            elif x > 1.0:
                x = 1.0
            out[i, c] = x - zi


@njit(cache=True)
def rk4_advance(indptr, indices, data, mu, k, gamma, b, z, h, nsteps):
    """Advance ``z`` in place by ``nsteps`` steps of size ``h``, clamping to [0, 1].

    Returns ``(max_overshoot, bad)`` where ``bad`` is 1 if a non-finite value
    appeared (``z`` is then left at the last finite state).
    """
    n, m = z.shape
    k1 = np.empty((n, m))
    k2 = np.empty((n, m))
    k3 = np.empty((n, m))
    k4 = np.empty((n, m))
    tmp = np.empty((n, m))
    over = 0.0
    for _ in range(nsteps):
        rhs_into(indptr, indices, data, mu, k, gamma, b, z, k1)
        for i in range(n):
            for c in range(m):
                tmp[i, c] = z[i, c] + 0.5 * h * k1[i, c]
        rhs_into(indptr, indices, data, mu, k, gamma, b, tmp, k2)
        for i in range(n):
            for c in range(m):
                tmp[i, c] = z[i, c] + 0.5 * h * k2[i, c]
        rhs_into(indptr, indices, data, mu, k, gamma, b, tmp, k3)
        for i in range(n):
            for c in range(m):
                tmp[i, c] = z[i, c] + h * k3[i, c]
        rhs_into(indptr, indices, data, mu, k, gamma, b, tmp, k4)
        for i in range(n):
            for c in range(m):
                v = z[i, c] + (h / 6.0) * (k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c] + k4[i, c])
                if not np.isfinite(v):
                    return over, 1
                if v > 1.0:
                    if v - 1.0 > over:
                        over = v - 1.0
                    v = 1.0
                elif v < 0.0:
                    if -v > over:
                        over = -v
                    v = 0.0
                tmp[i, c] = v
        for i in range(n):
            for c in range(m):
                z[i, c] = tmp[i, c]
    return over, 0
