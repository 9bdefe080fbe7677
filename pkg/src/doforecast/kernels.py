"""Hot loops for the convolutional models.

Each kernel exists twice: an ``@njit`` version and a vectorized numpy version.
The dispatch names (``conv1d_fwd`` etc.) point at numba when it imports and
``DOFORECAST_DISABLE_NUMBA`` is unset/0; otherwise at numpy. Both variants stay
importable so tests and ``benchmarks/bench_kernels.py`` can compare them.

Conventions: activations are ``[batch, steps, channels]``; conv weights are
``[k, in_ch, out_ch]``; ``x`` passed to the conv kernels is already padded, so
``out[b, t] = sum_i xpad[b, t + i*d] @ w[i]``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

_flag = os.environ.get("DOFORECAST_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = NUMBA_AVAILABLE and _flag not in ("1", "true", "yes")


# --------------------------------------------------------------------------
# numpy path

def conv1d_fwd_numpy(xpad, w, bias, dilation, out_len):
    k = w.shape[0]
    out = np.empty((xpad.shape[0], out_len, w.shape[2]))
    out[...] = bias
    for i in range(k):
        s = i * dilation
        out += xpad[:, s:s + out_len, :] @ w[i]
    return out


def conv1d_bwd_numpy(xpad, w, dy, dilation):
    """Returns ``(dxpad, dw, db)``."""
    k = w.shape[0]
    out_len = dy.shape[1]
    dxpad = np.zeros_like(xpad)
    dw = np.empty_like(w)
    cin = xpad.shape[2]
    dy2 = dy.reshape(-1, dy.shape[2])
    for i in range(k):
        s = i * dilation
        xs = xpad[:, s:s + out_len, :]
        dw[i] = xs.reshape(-1, cin).T @ dy2
        dxpad[:, s:s + out_len, :] += dy @ w[i].T
    db = dy2.sum(axis=0)
    return dxpad, dw, db


def maxpool_fwd_numpy(x, pool):
    b, t, c = x.shape
    n = t // pool
    win = x[:, :n * pool, :].reshape(b, n, pool, c)
    arg = win.argmax(axis=2)  # first index on ties
    out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, arg


def maxpool_bwd_numpy(dy, arg, pool, steps):
    b, n, c = dy.shape
    dwin = np.zeros((b, n, pool, c))
    np.put_along_axis(dwin, arg[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros((b, steps, c))
    dx[:, :n * pool, :] = dwin.reshape(b, n * pool, c)
    return dx


# --------------------------------------------------------------------------
# numba path

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def conv1d_fwd_numba(xpad, w, bias, dilation, out_len):
        nb = xpad.shape[0]
        k, cin, cout = w.shape
        out = np.empty((nb, out_len, cout))
        for b in range(nb):
            for t in range(out_len):
                for o in range(cout):
                    out[b, t, o] = bias[o]
                for i in range(k):
                    ti = t + i * dilation
                    for c in range(cin):
                        xv = xpad[b, ti, c]
                        for o in range(cout):  # contiguous in w and out
                            out[b, t, o] += xv * w[i, c, o]
        return out

    @njit(cache=True)
    def conv1d_bwd_numba(xpad, w, dy, dilation):
        nb, out_len, cout = dy.shape
        k, cin, _ = w.shape
        dxpad = np.zeros(xpad.shape)
        dw = np.zeros(w.shape)
        db = np.zeros(cout)
        for b in range(nb):
            for t in range(out_len):
                for o in range(cout):
                    db[o] += dy[b, t, o]
                for i in range(k):
                    ti = t + i * dilation
                    for c in range(cin):
                        xv = xpad[b, ti, c]
                        acc = 0.0
                        for o in range(cout):
                            g = dy[b, t, o]
                            dw[i, c, o] += xv * g
                            acc += w[i, c, o] * g
                        dxpad[b, ti, c] += acc
        return dxpad, dw, db

    @njit(cache=True)
    def maxpool_fwd_numba(x, pool):
        nb, t, c = x.shape
        n = t // pool
        out = np.empty((nb, n, c))
        arg = np.empty((nb, n, c), dtype=np.int64)
        for b in range(nb):
            for j in range(n):
                for ch in range(c):
                    best = x[b, j * pool, ch]
                    bi = 0
                    for p in range(1, pool):
                        v = x[b, j * pool + p, ch]
                        if v > best:
                            best = v
                            bi = p
                    out[b, j, ch] = best
                    arg[b, j, ch] = bi
        return out, arg

    @njit(cache=True)
    def maxpool_bwd_numba(dy, arg, pool, steps):
        nb, n, c = dy.shape
        dx = np.zeros((nb, steps, c))
        for b in range(nb):
            for j in range(n):
                for ch in range(c):
                    dx[b, j * pool + arg[b, j, ch], ch] = dy[b, j, ch]
        return dx

else:  # pragma: no cover
    conv1d_fwd_numba = conv1d_fwd_numpy
    conv1d_bwd_numba = conv1d_bwd_numpy
    maxpool_fwd_numba = maxpool_fwd_numpy
    maxpool_bwd_numba = maxpool_bwd_numpy


if USE_NUMBA:
    conv1d_fwd = conv1d_fwd_numba
    conv1d_bwd = conv1d_bwd_numba
    maxpool_fwd = maxpool_fwd_numba
    maxpool_bwd = maxpool_bwd_numba
else:
    conv1d_fwd = conv1d_fwd_numpy
    conv1d_bwd = conv1d_bwd_numpy
    maxpool_fwd = maxpool_fwd_numpy
    maxpool_bwd = maxpool_bwd_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
