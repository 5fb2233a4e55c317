"""Density of the ruin time.

For exponential claims with parameter ``lam`` the ruin time has the
defective density

    p(t) = e^{-lam s} [ f0(t) + sum_{n>=1} lam^n s^{n-1} / n! ( u (f^{*n} * f0)(t) + c (f^{*n} * f1)(t) ) ]

with ``s = u + c t`` and ``f1(t) = t f0(t)``.  Given ``T_0 = v`` the
conditional density on ``t > v`` is

    p(t | v) = (u + c v) / s  e^{-lam s} sum_{n>=1} (lam s)^n / n!  f^{*n}(t - v).

Closed forms exist for Erlang gaps (ordinary and, for order 2, stationary
start) in terms of ``0F_n`` functions; see :func:`erlang_closed_form` and
:func:`stationary_erlang2_closed_form`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .convolve import GridTerms, MixedExpCoefficientTerms, TruncationError, terms_for
from .model import (DensityGrid, Gamma, MixedExponential, ModelError, ModelParams, Ordinary, SeriesConfig,
                    Stationary)
from .specfun import log_hyp_pfq

PATHS = ("auto", "series", "closed")

# safety factor on the running maximum of the convolution densities
_SUP_SAFETY = 10.0


class DomainError(ModelError):
    """Evaluation point outside the support of a density."""


def closed_form_available(family, delay):
    if isinstance(family, Gamma) and family.is_integer and isinstance(delay, Ordinary):
        return True
    if isinstance(family, Gamma) and family.shape == 2 and isinstance(delay, Stationary):
        return True
    return isinstance(family, MixedExponential) and isinstance(delay, Ordinary)


@dataclass(frozen=True)
class DensityQuery:
    params: ModelParams
    family: object
    delay: object = field(default_factory=Ordinary)
    cfg: SeriesConfig = field(default_factory=SeriesConfig)
    path: str = "auto"

    def __post_init__(self):
        if self.path not in PATHS:
            raise ModelError(f"path must be one of {PATHS}, got {self.path!r}")
        if self.path == "closed" and not closed_form_available(self.family, self.delay):
            raise ModelError(f"no closed form for {type(self.family).__name__} with "
                             f"{type(self.delay).__name__} delay")

    @property
    def resolved_path(self):
        if self.path == "auto":
            return "closed" if closed_form_available(self.family, self.delay) else "series"
        return self.path

    def with_params(self, **changes):
        p = self.params
        new = ModelParams(changes.get("u", p.u), changes.get("c", p.c), changes.get("lam", p.lam))
        return DensityQuery(new, self.family, self.delay, self.cfg, self.path)


def _as_times(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise DomainError("the ruin-time density is evaluated at t > 0 only")
    return t


def _log_poisson(n, x, logx):
    return n * logx - math.lgamma(n + 1) - x


def _poisson_tail_log(n, x, logx):
    """Log of a bound on ``sum_{k>n} P(k)`` for Poisson(x), valid when ``n + 2 > x``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return _log_poisson(n + 1, x, logx) - np.log1p(-x / (n + 2))


def series_density(params, terms, t, cfg):
    """Truncated main series using any convolution source.

    Stops once a Poisson-tail bound on the remaining terms, scaled by the
    running maximum of ``(f^{*n} * f0)(t)`` times a safety factor, is below
    ``cfg.tol`` (absolute) and below ``cfg.tol`` times the partial sum.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    u, c, lam = params.u, params.c, params.lam
    s = u + c * t
    x = lam * s
    logx = np.log(x)
    logs = np.log(s)
    with np.errstate(divide="ignore"):
        logu = math.log(u) if u > 0 else -math.inf
    logc = math.log(c)

    it = terms.iter_conv(t)
    _, lg0, _ = next(it)
    total = np.exp(lg0 - x)
    logsup = lg0.copy()
    done = np.zeros(t.shape, dtype=bool)
    for n, lg, lh in it:
        if n > cfg.max_terms:
            raise TruncationError(f"density series needed more than {cfg.max_terms} terms")
        lw = _log_poisson(n, x, logx) - logs
        comb = np.logaddexp(logu + lg, logc + lh)
        total = total + np.where(done, 0.0, np.exp(lw + comb))
        logsup = np.maximum(logsup, lg)
        past_mode = n + 2 > x
        bound = np.exp(_poisson_tail_log(n, x, logx) + logsup) * _SUP_SAFETY
        bound = np.where(past_mode, bound, np.inf)
        done |= (bound < cfg.tol) & (bound <= cfg.tol * total)
        done |= past_mode & ~np.isfinite(logsup) & (logsup < 0)
        if np.all(done):
            break
    return total


def erlang_closed_form(params, n, beta, t, tol=1e-15):
    """Ruin-time density for ordinary Erlang(n, beta) gaps through ``0F_n`` functions.

    With ``Z = lam s (beta t)^n / n^n``:

        p(t) = beta e^{-lam s - beta t} / s (beta t)^{n-1} / Gamma(n)
               [ u 0F_n(1, 1+1/n, ..., 1+(n-1)/n; Z) + c t 0F_n(1+1/n, ..., 2; Z) ]
    """
    if int(n) != n or n < 1:
        raise ValueError("Erlang order must be a positive integer")
    n = int(n)
    t = _as_times(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    u, c, lam = params.u, params.c, params.lam
    s = u + c * t
    logz = np.log(lam * s) + n * np.log(beta * t) - n * math.log(n)
    z = np.exp(logz)
    lead = math.log(beta) - lam * s - beta * t - np.log(s) + (n - 1) * np.log(beta * t) - math.lgamma(n)
    first = [1 + k / n for k in range(n)]
    second = [1 + k / n for k in range(1, n + 1)]
    lf1, _ = log_hyp_pfq([], first, z, tol)
    lf2, _ = log_hyp_pfq([], second, z, tol)
    with np.errstate(divide="ignore"):
        a = (math.log(u) if u > 0 else -math.inf) + lf1
    b = np.log(c * t) + lf2
    out = np.exp(lead + np.logaddexp(a, b))
    return float(out[0]) if scalar else out


def stationary_erlang2_closed_form(params, beta, t, tol=1e-15):
    """Ruin-time density for Erlang(2, beta) gaps with an equilibrium first gap.

    With ``W = lam s (beta t)^2 / 4``:

        p(t) = beta e^{-lam s - beta t} / (2 s) [ u 0F2(1/2, 1; W) + t (beta u + c) 0F2(1, 3/2; W)
                                                  + c beta t^2 0F2(3/2, 2; W) ]
    """
    t = _as_times(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    u, c, lam = params.u, params.c, params.lam
    s = u + c * t
    w = lam * s * (beta * t) ** 2 / 4
    lead = math.log(beta) - lam * s - beta * t - np.log(2 * s)
    l1, _ = log_hyp_pfq([], [0.5, 1.0], w, tol)
    l2, _ = log_hyp_pfq([], [1.0, 1.5], w, tol)
    l3, _ = log_hyp_pfq([], [1.5, 2.0], w, tol)
    with np.errstate(divide="ignore"):
        a = (math.log(u) if u > 0 else -math.inf) + l1
    b = np.log(t * (beta * u + c)) + l2
    d = np.log(c * beta * t * t) + l3
    out = np.exp(lead + np.logaddexp(np.logaddexp(a, b), d))
    return float(out[0]) if scalar else out


def gamma_series_form(params, shape, beta, t, cfg=SeriesConfig()):
    """Ruin-time density for ordinary Gamma(shape, beta) gaps, any real shape.

    Double series in ``m`` with ``x = lam s``:

        e^{-x - beta t} / s [ u beta (beta t)^{shape-1} sum_m x^m (beta t)^{shape m} / (m! Gamma(shape (m+1)))
                            + c shape (beta t)^shape sum_m x^m (beta t)^{shape m} / (m! Gamma(shape (m+1) + 1)) ]
    """
    t = _as_times(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    u, c, lam = params.u, params.c, params.lam
    s = u + c * t
    x = lam * s
    lbt = np.log(beta * t)
    logx = np.log(x)
    with np.errstate(divide="ignore"):
        logu = math.log(u) if u > 0 else -math.inf
    pre_a = logu + math.log(beta) + (shape - 1) * lbt
    pre_b = math.log(c * shape) + shape * lbt

    acc = np.full(t.shape, -np.inf)
    prev = np.full(t.shape, np.inf)
    done = np.zeros(t.shape, dtype=bool)
    m = 0
    while True:
        if m > cfg.max_terms:
            raise TruncationError(f"gamma double series needed more than {cfg.max_terms} terms")
        common = m * logx + shape * m * lbt - math.lgamma(m + 1)
        la = pre_a + common - special.gammaln(shape * (m + 1))
        lb = pre_b + common - special.gammaln(shape * (m + 1) + 1)
        term = np.logaddexp(la, lb)
        acc = np.where(done, acc, np.logaddexp(acc, term))
        # ratio of consecutive terms; once below one it keeps falling
        logr = term - prev
        prev = term
        with np.errstate(invalid="ignore"):
            tail = term + logr - np.log1p(-np.exp(np.minimum(logr, -1e-12)))
        conv = (m > 1) & (logr < 0) & (tail < acc + math.log(cfg.tol))
        done |= conv | (term == -np.inf) & (m > 1)
        if np.all(done):
            break
        m += 1
    out = np.exp(acc - x - beta * t - np.log(s))
    return float(out[0]) if scalar else out


def density(q, t, backend=None):
    """Defective density ``p(t)`` of the ruin time at ``t > 0``.

    ``q.path`` selects the evaluator: ``"closed"`` uses the hypergeometric
    forms (Erlang gaps) or the gamma/eta coefficient mixtures (mixed
    exponential gaps); ``"series"`` sums the main series with convolutions
    from the family-specific mixture algebra or, failing that, from grid
    convolution; ``"auto"`` prefers the closed form.
    """
    t = _as_times(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    fam, delay, params, cfg = q.family, q.delay, q.params, q.cfg
    path = q.resolved_path
    if path == "closed" and isinstance(fam, Gamma):
        if isinstance(delay, Ordinary):
            out = erlang_closed_form(params, int(fam.shape), fam.rate, t)
        else:
            out = stationary_erlang2_closed_form(params, fam.rate, t)
    else:
        terms = terms_for(fam, delay, path, cfg, t_max=float(t.max()), backend=backend)
        if isinstance(terms, GridTerms):
            out = _grid_density(q, terms.dt, float(t.max()), backend)(t)
        else:
            out = series_density(params, terms, t, cfg)
    out = np.asarray(out, dtype=float)
    return float(out[0]) if scalar else out


def _grid_density(q, dt, t_max, backend):
    """Density on the whole convolution grid, cached on the query.

    The grid extent is rounded up to a power of two number of steps so that
    repeated calls (one per quadrature batch) reuse one computation.
    """
    n = 1 << max(4, int(math.ceil(math.log2(t_max / dt + 2))))
    key = (n, dt, backend)
    # DensityQuery is frozen and holds arrays, so the cache lives in __dict__
    cache = q.__dict__.setdefault("_grid_cache", {})
    for (m, d, b), grid in cache.items():
        if d == dt and b == backend and m >= n:
            return grid
    terms = terms_for(q.family, q.delay, q.resolved_path, q.cfg, t_max=n * dt, backend=backend)
    nodes = dt * np.arange(n + 1)
    values = np.empty(n + 1)
    values[1:] = series_density(q.params, terms, nodes[1:], q.cfg)
    # every convolution term vanishes at t = 0
    values[0] = math.exp(-q.params.lam * q.params.u + terms.log_f0(np.zeros(1))[0])
    grid = DensityGrid(0.0, dt, values)
    cache[key] = grid
    return grid


density_at = density


# -- conditional density and the crossing-time density -------------------------


def _nfold_source(family, cfg, y_max, path="auto", backend=None):
    if isinstance(family, MixedExponential) and path != "series":
        return MixedExpCoefficientTerms(family, cfg.coeff_tol, backend)
    p = "closed" if path == "auto" else path
    return terms_for(family, Ordinary(), p if p == "closed" else "series", cfg, t_max=y_max, backend=backend)


def _poisson_nfold_sum(x, y, source, cfg):
    """``sum_{n>=1} e^{-x} x^n / n! f^{*n}(y)`` for arrays ``x, y`` (y > 0)."""
    logx = np.log(x)
    total = np.zeros(x.shape)
    logsup = np.full(x.shape, -np.inf)
    done = np.zeros(x.shape, dtype=bool)
    for n, lf in source.iter_nfold(y):
        if n > cfg.max_terms:
            raise TruncationError(f"conditional series needed more than {cfg.max_terms} terms")
        total = total + np.where(done, 0.0, np.exp(_log_poisson(n, x, logx) + lf))
        logsup = np.maximum(logsup, lf)
        past_mode = n + 2 > x
        bound = np.where(past_mode, np.exp(_poisson_tail_log(n, x, logx) + logsup) * _SUP_SAFETY, np.inf)
        done |= (bound < cfg.tol) & (bound <= cfg.tol * total)
        done |= past_mode & (logsup == -np.inf) & (n > 2)
        if np.all(done):
            break
    return total


def conditional_density(params, family, v, t, cfg=SeriesConfig(), path="auto", backend=None):
    """Density of the ruin time given ``T_0 = v``, on ``t > v``; zero for ``t <= v``.

    Ruin exactly at the first claim is an atom in this conditional law and
    is not part of the returned density.
    """
    v = np.asarray(v, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(v < 0) or np.any(~np.isfinite(v)):
        raise DomainError("first inter-claim time v must be finite and >= 0")
    v, t = np.broadcast_arrays(v, t)
    scalar = t.ndim == 0
    v = np.atleast_1d(v).astype(float)
    t = np.atleast_1d(t).astype(float)
    out = np.zeros(t.shape)
    live = t > v
    if np.any(live):
        tv, vv = t[live], v[live]
        s = params.u + params.c * tv
        x = params.lam * s
        y = tv - vv
        source = _nfold_source(family, cfg, float(y.max()), path, backend)
        out[live] = (params.u + params.c * vv) / s * _poisson_nfold_sum(x, y, source, cfg)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class KendallQuery:
    """Crossing 'time' ``s`` of level ``-(v + u/c)`` by ``Z(s) = Z0(s) - s/c``."""

    params: ModelParams
    family: object
    v: float
    s: float

    def __post_init__(self):
        if not self.v > 0:
            raise DomainError("v must be > 0")
        if not self.s > self.params.u + self.params.c * self.v:
            raise DomainError(f"s must exceed u + c v = {self.params.u + self.params.c * self.v}")


def kendall_sigma_density(kq, cfg=SeriesConfig(), path="auto", backend=None):
    """Density of the crossing time from Kendall's identity.

    ``p(s) = (v + u/c) / s * e^{-lam s} sum_{n>=1} (lam s)^n / n! f^{*n}((s - u)/c - v)``;
    ``c * p(u + c t)`` equals the conditional ruin density at ``t``.
    """
    u, c, lam = kq.params.u, kq.params.c, kq.params.lam
    level = kq.v + u / c
    y = np.atleast_1d((kq.s - u) / c - kq.v)
    x = np.atleast_1d(lam * kq.s)
    source = _nfold_source(kq.family, cfg, float(y.max()), path, backend)
    return float(level / kq.s * _poisson_nfold_sum(x, y, source, cfg)[0])
