"""Compiled inner loops shared by :mod:`volterra` and :mod:`adapt`.

Lag arrays are absolute sample delays (see ``KernelSet.lag_arrays``); the
feature vector at time ``k`` is ``[1, x[k-l1], x[k-l2a]*x[k-l2b], ...]``.
"""

import numpy as np
from numba import njit

OK = 0
NONFINITE = 1
ERROR_LIMIT = 2


@njit(cache=True)
def fill_features(x, k, l1, l2, l3, out):
    out[0] = 1.0
    j = 1
    for i in range(l1.shape[0]):
        out[j] = x[k - l1[i]]
        j += 1
    for i in range(l2.shape[0]):
        out[j] = x[k - l2[i, 0]] * x[k - l2[i, 1]]
        j += 1
    for i in range(l3.shape[0]):
        out[j] = x[k - l3[i, 0]] * x[k - l3[i, 1]] * x[k - l3[i, 2]]
        j += 1


@njit(cache=True)
def equalize(x, w, l1, l2, l3, first_k, step, n_out):
    y = np.empty(n_out)
    n1 = l1.shape[0]
    n2 = l2.shape[0]
    n3 = l3.shape[0]
    for n in range(n_out):
        k = first_k + n * step
        acc = w[0]
        for i in range(n1):
            acc += w[1 + i] * x[k - l1[i]]
        for i in range(n2):
            acc += w[1 + n1 + i] * (x[k - l2[i, 0]] * x[k - l2[i, 1]])
        for i in range(n3):
            acc += w[1 + n1 + n2 + i] * (x[k - l3[i, 0]] * x[k - l3[i, 1]] * x[k - l3[i, 2]])
        y[n] = acc
    return y


@njit(cache=True)
def nearest_level(y, levels):
    # levels sorted ascending; a value on a midpoint goes to the lower level
    n = levels.shape[0]
    for i in range(n - 1):
        if y <= 0.5 * (levels[i] + levels[i + 1]):
            return levels[i]
    return levels[n - 1]


@njit(cache=True)
def lms_run(x, w, l1, l2, l3, first_k, step, n_steps, refs, levels, mu, normalized, eps,
            err_limit, errors):
    """Run ``n_steps`` LMS updates in place on ``w``.

    ``refs`` supplies the reference per step; when it is empty the nearest
    entry of ``levels`` to the equalizer output is used (decision-directed).
    Returns ``(status, step_index)``.
    """
    phi = np.empty(w.shape[0])
    dd = refs.shape[0] == 0
    for n in range(n_steps):
        k = first_k + n * step
        fill_features(x, k, l1, l2, l3, phi)
        y = 0.0
        for i in range(w.shape[0]):
            y += w[i] * phi[i]
        if dd:
            ref = nearest_level(y, levels)
        else:
            ref = refs[n]
        e = ref - y
        errors[n] = e
        if not np.isfinite(e):
            return NONFINITE, n
        if abs(e) > err_limit:
            return ERROR_LIMIT, n
        g = mu * e
        if normalized:
            p = eps
            for i in range(phi.shape[0]):
                p += phi[i] * phi[i]
            g = g / p
        for i in range(w.shape[0]):
            w[i] += g * phi[i]
    return OK, n_steps
