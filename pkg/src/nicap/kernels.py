"""Hot numeric kernels, numba-jitted with a pure-numpy fallback.

Set NICAP_NUMBA=0 in the environment to force the numpy path (useful for
debugging and for the benchmark in benchmarks/bench_kernels.py). Everything
else in the package calls the public names below and never touches numba
directly. Matrix products stay on numpy/BLAS; only the pointwise and
row-reduction loops live here.
"""

import os

import numpy as np


def _numpy_sigmoid(x):
    # split on sign to avoid exp overflow for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _numpy_softmax_rows(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def _numpy_log_softmax_rows(x):
    m = x.max(axis=1, keepdims=True)
    s = x - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def _numpy_sgd_update(w, g, v, lr, momentum, weight_decay):
    # g' = g + wd*w ; v <- momentum*v + g' ; w <- w - lr*v   (all in place)
    gp = g + weight_decay * w
    v *= momentum
    v += gp
    w -= lr * v


_HAVE_NUMBA = False
if os.environ.get("NICAP_NUMBA", "1").lower() not in ("0", "false", "off"):
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA


if USE_NUMBA:

    @njit(cache=True)
    def _nb_sigmoid(x):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            if xi >= 0.0:
                flat_o[i] = 1.0 / (1.0 + np.exp(-xi))
            else:
                e = np.exp(xi)
                flat_o[i] = e / (1.0 + e)
        return out

    @njit(cache=True)
    def _nb_softmax_rows(x):
        n, m = x.shape
        out = np.empty_like(x)
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, m):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(m):
                e = np.exp(x[i, j] - mx)
                out[i, j] = e
                s += e
            for j in range(m):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def _nb_log_softmax_rows(x):
        n, m = x.shape
        out = np.empty_like(x)
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, m):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(m):
                s += np.exp(x[i, j] - mx)
            lz = np.log(s)
            for j in range(m):
                out[i, j] = x[i, j] - mx - lz
        return out

    @njit(cache=True)
    def _nb_sgd_update(w, g, v, lr, momentum, weight_decay):
        fw = w.ravel()
        fg = g.ravel()
        fv = v.ravel()
        for i in range(fw.size):
            gp = fg[i] + weight_decay * fw[i]
            fv[i] = momentum * fv[i] + gp
            fw[i] -= lr * fv[i]

    def sigmoid(x):
        return _nb_sigmoid(np.ascontiguousarray(x))

    def softmax_rows(x):
        return _nb_softmax_rows(np.ascontiguousarray(x))

    def log_softmax_rows(x):
        return _nb_log_softmax_rows(np.ascontiguousarray(x))

    def sgd_update(w, g, v, lr, momentum, weight_decay):
        _nb_sgd_update(w, np.ascontiguousarray(g), v,
                       w.dtype.type(lr), w.dtype.type(momentum),
                       w.dtype.type(weight_decay))

else:
    sigmoid = _numpy_sigmoid
    softmax_rows = _numpy_softmax_rows
    log_softmax_rows = _numpy_log_softmax_rows

    def sgd_update(w, g, v, lr, momentum, weight_decay):
        _numpy_sgd_update(w, g, v, w.dtype.type(lr), w.dtype.type(momentum),
                          w.dtype.type(weight_decay))
