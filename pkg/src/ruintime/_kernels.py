"""Numeric inner loops, each with a numba and a numpy implementation.

The public wrappers take a ``backend`` argument (``"numba"`` or
``"numpy"``); ``None`` picks the process default from :mod:`._accel`.
"""

import math

import numpy as np
from scipy import signal, special

from ._accel import njit, resolve_backend

# -- trapezoid convolution on a uniform grid ---------------------------------


@njit(cache=True)
def _conv_trapz_nb(a, b, n_out, dt):
    out = np.zeros(n_out)
    na = a.size
    nb = b.size
    for k in range(n_out):
        lo = max(0, k - nb + 1)
        hi = min(k, na - 1)
        if lo > hi:
            continue
        s = 0.0
        for j in range(lo, hi + 1):
            s += a[j] * b[k - j]
        if k == 0:
            continue
        # endpoint halves of the trapezoid rule on [0, t_k]
        if k < nb:
            s -= 0.5 * a[0] * b[k]
        if k < na:
            s -= 0.5 * a[k] * b[0]
        out[k] = s * dt
    return out


def _conv_trapz_np(a, b, n_out, dt, fft=False):
    a = a[:n_out]
    b = b[:n_out]
    full = (signal.fftconvolve(a, b) if fft else np.convolve(a, b))[:n_out]
    out = np.zeros(n_out)
    out[: full.size] = full
    kb = np.arange(1, min(n_out, b.size))
    out[kb] -= 0.5 * a[0] * b[kb]
    ka = np.arange(1, min(n_out, a.size))
    out[ka] -= 0.5 * a[ka] * b[0]
    out[0] = 0.0
    return out * dt


# above this many multiply-adds "auto" switches to FFT convolution
FFT_THRESHOLD = 4_000_000


def conv_trapz(a, b, n_out, dt, backend=None, method="auto"):
    """Trapezoid-rule values of ``int_0^{t_k} a(t_k - s) b(s) ds`` for ``k < n_out``.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"``.  FFT rounding
    leaves absolute errors near ``1e-16 * sum|a| * sum|b| * dt``, so tiny
    tail values are not resolved relative to themselves.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if method not in ("auto", "direct", "fft"):
        raise ValueError(f"unknown convolution method {method!r}")
    if method == "auto":
        work = n_out * min(a.size, b.size, n_out)
        method = "fft" if work > FFT_THRESHOLD else "direct"
    if method == "fft":
        return _conv_trapz_np(a, b, int(n_out), float(dt), fft=True)
    if resolve_backend(backend) == "numba":
        return _conv_trapz_nb(a, b, int(n_out), float(dt))
    return _conv_trapz_np(a, b, int(n_out), float(dt))


# -- log of an Erlang mixture -------------------------------------------------


@njit(cache=True)
def _mixture_logpdf_nb(logw, offset, beta, t):
    n = t.size
    k = logw.size
    out = np.empty(n)
    logbeta = math.log(beta)
    lg = np.empty(k)
    for j in range(k):
        lg[j] = math.lgamma(offset + j)
    for i in range(n):
        ti = t[i]
        if ti <= 0.0:
            if offset == 1 and ti == 0.0:
                out[i] = logw[0] + logbeta
            else:
                out[i] = -np.inf
            continue
        lbt = math.log(beta * ti)
        base = logbeta - beta * ti
        m = -np.inf
        for j in range(k):
            v = logw[j] + (offset + j - 1) * lbt - lg[j]
            if v > m:
                m = v
        if m == -np.inf:
            out[i] = -np.inf
            continue
        s = 0.0
        for j in range(k):
            v = logw[j] + (offset + j - 1) * lbt - lg[j]
            s += math.exp(v - m)
        out[i] = base + m + math.log(s)
    return out


def _mixture_logpdf_np(logw, offset, beta, t):
    orders = offset + np.arange(logw.size)
    pos = t > 0
    out = np.full(t.shape, -np.inf)
    if np.any(pos):
        tp = t[pos]
        lbt = np.log(beta * tp)[:, None]
        v = logw[None, :] + (orders - 1)[None, :] * lbt - special.gammaln(orders)[None, :]
        out[pos] = math.log(beta) - beta * tp + special.logsumexp(v, axis=1)
    if offset == 1:
        out = np.where(t == 0, logw[0] + math.log(beta), out)
    return out


def mixture_logpdf(logw, offset, beta, t, backend=None):
    """``log sum_j w_j e(offset + j, beta; t)`` given ``logw = log w``."""
    logw = np.ascontiguousarray(logw, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = t.shape  # ascontiguousarray would promote 0-d to 1-d
    t = np.ascontiguousarray(t.ravel())
    if resolve_backend(backend) == "numba":
        out = _mixture_logpdf_nb(logw, int(offset), float(beta), t)
    else:
        out = _mixture_logpdf_np(logw, int(offset), float(beta), t)
    return out.reshape(shape)
