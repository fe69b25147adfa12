"""Numeric inner loops.

Each kernel has a vectorised numpy implementation and a loop implementation
compiled with numba ``@njit``.  The numba path is used when numba imports and
the environment variable ``DIVDECODE_NO_NUMBA`` is unset (or ``0``); set it to
``1`` to force the pure-numpy path.  Both paths are always importable through
:data:`numpy_kernels` and :data:`numba_kernels` so they can be tested and
benchmarked against each other.
"""
import math
import os
from types import SimpleNamespace

import numpy as np

# --------------------------------------------------------------------------
# numpy path


def _np_log_softmax(z):
    m = np.max(z)
    shifted = z - m
    return shifted - np.log(np.sum(np.exp(shifted)))


def _np_softmax_temperature(z, T):
    scaled = z / T
    e = np.exp(scaled - np.max(scaled))
    return e / np.sum(e)


def _np_top_s_filter(p, s):
    if s >= p.shape[0]:
        return p.copy()
    keep = np.argsort(-p, kind="stable")[:s]
    out = np.zeros_like(p)
    out[keep] = p[keep]
    return out / np.sum(out)


def _np_draw(p, u):
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    n = p.shape[0]
    if idx >= n:
        idx = n - 1
    # never land on a zero-mass entry because of rounding at the top end
    while p[idx] <= 0.0 and idx > 0:
        idx -= 1
    return idx


def _np_sample_step(z, T, s, u):
    p = _np_softmax_temperature(z, T)
    if 0 < s < p.shape[0]:
        p = _np_top_s_filter(p, s)
    idx = _np_draw(p, u)
    return idx, float(_np_log_softmax(z)[idx])


def _np_sq_dists(X, C):
    d = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", d, d)


def _np_assign(X, C):
    d2 = _np_sq_dists(X, C)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(X.shape[0]), labels]


def _np_centroids(X, labels, k):
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    C = np.zeros_like(sums)
    nz = counts > 0
    C[nz] = sums[nz] / counts[nz, None]
    return C, counts


numpy_kernels = SimpleNamespace(
    name="numpy",
    log_softmax=_np_log_softmax,
    softmax_temperature=_np_softmax_temperature,
    top_s_filter=_np_top_s_filter,
    draw=_np_draw,
    sample_step=_np_sample_step,
    sq_dists=_np_sq_dists,
    assign=_np_assign,
    centroids=_np_centroids,
)

# --------------------------------------------------------------------------
# numba path


def _lp_log_softmax(z):
    n = z.shape[0]
    m = z[0]
    for i in range(1, n):
        if z[i] > m:
            m = z[i]
    acc = 0.0
    for i in range(n):
        acc += math.exp(z[i] - m)
    lse = math.log(acc)
    out = np.empty(n)
    for i in range(n):
        out[i] = z[i] - m - lse
    return out


def _lp_softmax_temperature(z, T):
    n = z.shape[0]
    m = z[0] / T
    for i in range(1, n):
        if z[i] / T > m:
            m = z[i] / T
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        out[i] = math.exp(z[i] / T - m)
        acc += out[i]
    for i in range(n):
        out[i] /= acc
    return out


def _lp_top_s_filter(p, s):
    n = p.shape[0]
    out = p.copy()
    if s >= n:
        return out
    order = np.argsort(-p, kind="mergesort")
    for j in range(s, n):
        out[order[j]] = 0.0
    acc = 0.0
    for i in range(n):
        acc += out[i]
    for i in range(n):
        out[i] /= acc
    return out


def _lp_draw(p, u):
    n = p.shape[0]
    total = 0.0
    for i in range(n):
        total += p[i]
    target = u * total
    acc = 0.0
    idx = n - 1
    for i in range(n):
        acc += p[i]
        if target < acc:
            idx = i
            break
    while p[idx] <= 0.0 and idx > 0:
        idx -= 1
    return idx


def _lp_sq_dists(X, C):
    n, d = X.shape
    k = C.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = X[i, t] - C[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out


def _lp_assign(X, C):
    n = X.shape[0]
    d2 = _lp_sq_dists_jit(X, C)
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        b = 0
        for j in range(1, d2.shape[1]):
            if d2[i, j] < d2[i, b]:
                b = j
        labels[i] = b
        best[i] = d2[i, b]
    return labels, best


def _lp_centroids(X, labels, k):
    n, d = X.shape
    C = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
        for t in range(d):
            C[labels[i], t] += X[i, t]
    for j in range(k):
        if counts[j] > 0:
            for t in range(d):
                C[j, t] /= counts[j]
    return C, counts


numba_kernels = None
try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

if njit is not None:
    _opts = dict(cache=True)
    _lp_log_softmax_jit = njit(**_opts)(_lp_log_softmax)
    _lp_softmax_temperature_jit = njit(**_opts)(_lp_softmax_temperature)
    _lp_top_s_filter_jit = njit(**_opts)(_lp_top_s_filter)
    _lp_draw_jit = njit(**_opts)(_lp_draw)
    _lp_sq_dists_jit = njit(**_opts)(_lp_sq_dists)
    _lp_assign_jit = njit(**_opts)(_lp_assign)
    _lp_centroids_jit = njit(**_opts)(_lp_centroids)

    @njit(**_opts)
    def _lp_sample_step_jit(z, T, s, u):
        p = _lp_softmax_temperature_jit(z, T)
        if 0 < s < p.shape[0]:
            p = _lp_top_s_filter_jit(p, s)
        idx = _lp_draw_jit(p, u)
        return idx, _lp_log_softmax_jit(z)[idx]

    def _nb_sample_step(z, T, s, u):
        idx, lp = _lp_sample_step_jit(z, float(T), int(s), float(u))
        return int(idx), float(lp)

    def _nb_draw(p, u):
        return int(_lp_draw_jit(p, float(u)))

    def _nb_centroids(X, labels, k):
        return _lp_centroids_jit(X, labels, int(k))

    numba_kernels = SimpleNamespace(
        name="numba",
        log_softmax=_lp_log_softmax_jit,
        softmax_temperature=lambda z, T: _lp_softmax_temperature_jit(z, float(T)),
        top_s_filter=lambda p, s: _lp_top_s_filter_jit(p, int(s)),
        draw=_nb_draw,
        sample_step=_nb_sample_step,
        sq_dists=_lp_sq_dists_jit,
        assign=_lp_assign_jit,
        centroids=_nb_centroids,
    )


def _select():
    flag = os.environ.get("DIVDECODE_NO_NUMBA", "").strip().lower()
    if flag not in ("", "0", "false", "no") or numba_kernels is None:
        return numpy_kernels
    return numba_kernels


kernels = _select()
BACKEND = kernels.name
