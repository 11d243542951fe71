"""Pure numpy versions of the compiled kernels.

Every function here returns bit-identical results to its counterpart in
``_ckernels``; the test-suite checks this on random inputs.
"""

import numpy as np

_KSG_BLOCK = 512


def topk_desc(sims, k):
    sims = np.ascontiguousarray(sims, dtype=np.float64)
    n_rows, n_cols = sims.shape
    if k < 1 or k > n_cols:
        raise ValueError(f"k={k} outside [1, {n_cols}]")
    if k == n_cols:
        select = np.ones_like(sims, dtype=bool)
    else:
        kth = np.partition(sims, n_cols - k, axis=1)[:, n_cols - k]
        above = sims > kth[:, None]
        need = k - above.sum(axis=1)
        tied = sims == kth[:, None]
        select = above | (tied & (np.cumsum(tied, axis=1) <= need[:, None]))
    cols = np.nonzero(select)[1].reshape(n_rows, k)
    vals = np.take_along_axis(sims, cols, axis=1)
    # stable descending order: equal values keep ascending column order
    order = np.argsort(-vals, axis=1, kind="stable")
    return np.take_along_axis(cols, order, axis=1).astype(np.int64)


def ksg_counts(x, y, k):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y differ in length")
    if k < 1 or k > n - 1:
        raise ValueError(f"k={k} outside [1, {n - 1}]")
    nx = np.empty(n, dtype=np.int64)
    ny = np.empty(n, dtype=np.int64)
    for start in range(0, n, _KSG_BLOCK):
        stop = min(start + _KSG_BLOCK, n)
        rows = np.arange(stop - start)
        dx = np.abs(x[start:stop, None] - x[None, :])
        dy = np.abs(y[start:stop, None] - y[None, :])
        dx[rows, rows + start] = np.inf
        dy[rows, rows + start] = np.inf
        dz = np.maximum(dx, dy)
        eps = np.partition(dz, k - 1, axis=1)[:, k - 1]
        nx[start:stop] = (dx < eps[:, None]).sum(axis=1)
        ny[start:stop] = (dy < eps[:, None]).sum(axis=1)
    return nx, ny


def yin_pick(diff, tau_min, tau_max, threshold):
    diff = np.ascontiguousarray(diff, dtype=np.float64)
    if diff.shape[1] != tau_max + 1:
        raise ValueError("difference function width must be tau_max + 1")
    if tau_min < 1 or tau_min >= tau_max:
        raise ValueError("need 1 <= tau_min < tau_max")
    n_frames = diff.shape[0]
    cum = np.cumsum(diff[:, 1:], axis=1)
    lags = np.arange(1, tau_max + 1, dtype=np.float64)
    cm = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        cm[:, 1:] = np.where(cum > 0, diff[:, 1:] * lags / cum, 1.0)

    below = cm[:, tau_min:tau_max] < threshold
    found = below.any(axis=1)
    tau = tau_min + below.argmax(axis=1)
    rows = np.arange(n_frames)
    active = found.copy()
    while active.any():
        nxt = np.minimum(tau + 1, tau_max)
        step = active & (tau + 1 < tau_max) & (cm[rows, nxt] < cm[rows, tau])
        tau = tau + step
        active = step

    a = cm[rows, np.maximum(tau - 1, 0)]
    b = cm[rows, tau]
    c = cm[rows, np.minimum(tau + 1, tau_max)]
    den = a - 2.0 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(den != 0, 0.5 * (a - c) / den, 0.0)
    return np.where(found, tau + shift, 0.0)
