"""Convolution powers of inter-claim densities.

Closed forms cover gamma and mixed-exponential inter-claim times; anything
else goes through trapezoid convolution on a uniform grid.  Mixed
exponential convolutions are represented as Erlang mixtures
``sum_j w_j e(offset + j, beta; t)`` where ``e(m, beta; t)`` is the
Erlang(m) density with rate ``beta``.

The ``*Terms`` classes feed the ruin-time series: for a (family, delay)
pair they yield, for ``n = 0, 1, 2, ...``, the logs of
``(f^{*n} * f0)(t)`` and ``(f^{*n} * f1)(t)`` with ``f1(t) = t f0(t)``,
plus ``f^{*n}(y)`` for the conditional density.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .model import (DensityGrid, Explicit, Gamma, MixedExponential, ModelError, Ordinary,
                    Stationary, Tabulated, UnsupportedError, delay_density, family_pdf,
                    gamma_logpdf, moments, stationary_mixture)
from .specfun import kummer_1f1


class SingularityError(ValueError):
    """A density was evaluated at a point where it is infinite."""


class TruncationError(ArithmeticError):
    """A coefficient sequence did not reach its mass target within the cap."""


MAX_COEFFS = 1_000_000


def _ravel(t):
    t = np.asarray(t, dtype=float)
    return t, t.ndim == 0


def erlang_logpdf(m, beta, t):
    return gamma_logpdf(float(m), beta, t)


def erlang_density(m, beta, t):
    """``beta^m t^(m-1) e^(-beta t) / (m-1)!``, evaluated in log-space."""
    if int(m) != m or m < 1:
        raise ValueError("Erlang order must be a positive integer")
    t, scalar = _ravel(t)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    out = np.exp(erlang_logpdf(m, beta, t))
    return float(out) if scalar else out


def gamma_nfold(shape, beta, m, t):
    """``f^{*m}(t)`` for Gamma(shape, beta): the Gamma(m*shape, beta) density."""
    t, scalar = _ravel(t)
    if m < 1:
        raise ValueError("m must be >= 1")
    a = shape * m
    if a < 1 and np.any(t == 0):
        raise SingularityError(f"Gamma({a}) density is infinite at t = 0")
    out = np.exp(gamma_logpdf(a, beta, t))
    return float(out) if scalar else out


def gamma_conv_f1_ordinary(shape, beta, m, t):
    """``(f^{*m} * f1)(t)`` for ordinary gamma arrivals, ``f1(t) = t f(t)``.

    Equals ``(shape / beta)`` times the Gamma(shape (m+1) + 1, beta) density.
    """
    t, scalar = _ravel(t)
    if m < 0:
        raise ValueError("m must be >= 0")
    a = shape * (m + 1) + 1
    out = (shape / beta) * np.exp(gamma_logpdf(a, beta, t))
    return float(out) if scalar else out


def stationary_erlang2_conv(beta, m, t, which="f0"):
    """``(f^{*m} * f0)(t)`` or ``(f^{*m} * f1)(t)`` for Erlang(2) gaps with a stationary start."""
    t, scalar = _ravel(t)
    e = lambda k: np.exp(erlang_logpdf(k, beta, t))  # noqa: E731
    if which == "f0":
        out = 0.5 * (e(2 * m + 1) + e(2 * m + 2))
    elif which == "f1":
        out = 0.5 * e(2 * m + 2) / beta + e(2 * m + 3) / beta
    else:
        raise ValueError("which must be 'f0' or 'f1'")
    return float(out) if scalar else out


# -- Erlang mixtures ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ErlangMixture:
    beta: float
    offset: int
    weights: np.ndarray

    @property
    def mass(self):
        return float(np.sum(self.weights))

    def logpdf(self, t, backend=None):
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return _kernels.mixture_logpdf(logw, self.offset, self.beta, np.asarray(t, dtype=float), backend)

    def __call__(self, t, backend=None):
        t, scalar = _ravel(t)
        out = np.exp(self.logpdf(t, backend))
        return float(out) if scalar else out


def _log_rising_over_factorial(r, j):
    """``log((r)_j / j!)`` on a broadcast grid; ``-inf`` where the value is zero."""
    r = np.asarray(r, dtype=float)
    j = np.asarray(j, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.gammaln(r + j) - special.gammaln(np.where(r > 0, r, 1.0)) - special.gammaln(j + 1)
    out = np.where(r > 0, out, np.where(j == 0, 0.0, -np.inf))
    return out


def _coefficient_sequence(block, ratio, coeff_tol, chunk=256):
    """Concatenate coefficient blocks until the tail is negligible.

    The weights eventually decay geometrically with ``ratio``.  Stops at the
    first index past the peak where the weight is below ``coeff_tol`` times
    the largest one and the geometric tail bound is below ``coeff_tol``
    times the accumulated sum.
    """
    parts = []
    total = 0.0
    wmax = 0.0
    prev = math.inf
    start = 0
    tail_factor = ratio / (1.0 - ratio) if ratio > 0 else 0.0
    while start < MAX_COEFFS:
        w = block(np.arange(start, start + chunk))
        for k, wk in enumerate(w):
            total += wk
            wmax = max(wmax, wk)
            if wk <= prev and wk <= coeff_tol * wmax and wk * tail_factor <= coeff_tol * total:
                parts.append(w[: k + 1])
                return np.concatenate(parts)
            prev = wk
        parts.append(w)
        start += chunk
    raise TruncationError(f"coefficient series did not converge within {MAX_COEFFS} terms")


@functools.lru_cache(maxsize=4096)
def mixedexp_gamma_coeffs(p, alpha, beta, m, coeff_tol=1e-14):
    """Erlang-mixture weights of ``f^{*m}`` for mixed exponential gaps.

    ``gamma_{m,j} = q^m (1 - alpha/beta)^j sum_r C(m,r) (r)_j / j! (alpha p / (beta q))^r``
    on orders ``m + j``.
    """
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    q = 1.0 - p
    rho = 1.0 - alpha / beta
    r = np.arange(m + 1, dtype=float)
    logc = special.gammaln(m + 1) - special.gammaln(r + 1) - special.gammaln(m - r + 1)
    base = logc + r * math.log(alpha * p / (beta * q))

    def block(j):
        lt = base[:, None] + _log_rising_over_factorial(r[:, None], j[None, :])
        with np.errstate(divide="ignore"):
            lr = math.log(rho) if rho > 0 else -np.inf
        jl = np.where(j == 0, 0.0, j * lr)
        return np.exp(m * math.log(q) + jl + special.logsumexp(lt, axis=0))

    weights = _coefficient_sequence(block, rho, coeff_tol)
    weights.flags.writeable = False  # shared through the cache
    return ErlangMixture(beta, m, weights)


@functools.lru_cache(maxsize=4096)
def mixedexp_eta_coeffs(p, alpha, beta, m, coeff_tol=1e-14, form="derived"):
    """Erlang-mixture weights of ``(f^{*m} * f1)(t)`` for ordinary mixed exponential gaps.

    ``form="derived"`` (default) expands the Kummer representation of
    :func:`mixedexp_conv_f1_kummer` term by term:

        eta_{i,m} = q^m / beta^2 (1 - alpha/beta)^i sum_r C(m,r) (alpha p / (beta q))^r
                    [alpha p (r+2)_i + beta q (r)_i] / i!

    ``form="printed"`` uses the weight ``(r)_i ((r+2)(r+1) alpha p + beta q)``
    in place of the bracket.  That variant does not integrate to ``E[T_1]``
    and disagrees with the Kummer form; it is kept so the cross-check can
    demonstrate the discrepancy.
    """
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    if form not in ("derived", "printed"):
        raise ValueError("form must be 'derived' or 'printed'")
    m = int(m)
    q = 1.0 - p
    rho = 1.0 - alpha / beta
    r = np.arange(m + 1, dtype=float)
    logc = special.gammaln(m + 1) - special.gammaln(r + 1) - special.gammaln(m - r + 1)
    base = logc + r * math.log(alpha * p / (beta * q))
    lead = m * math.log(q) - 2 * math.log(beta)

    def block(i):
        jl = np.where(i == 0, 0.0, i * (math.log(rho) if rho > 0 else -np.inf))
        lr = _log_rising_over_factorial(r[:, None], i[None, :])
        if form == "derived":
            la = math.log(alpha * p) + _log_rising_over_factorial(r[:, None] + 2, i[None, :])
            lb = math.log(beta * q) + lr
            lt = base[:, None] + np.logaddexp(la, lb)
        else:
            w = np.log((r + 2) * (r + 1) * alpha * p + beta * q)
            lt = base[:, None] + lr + w[:, None]
        return np.exp(lead + jl + special.logsumexp(lt, axis=0))

    weights = _coefficient_sequence(block, rho, coeff_tol)
    weights.flags.writeable = False
    return ErlangMixture(beta, m + 2, weights)


def mixedexp_conv_f1_kummer(p, alpha, beta, m, t, tol=1e-15):
    """``(f^{*m} * f1)(t)`` via two binomial sums of ``1F1`` terms.

    Independent of the Erlang-mixture coefficients; used as their oracle.
    """
    t, scalar = _ravel(t)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    q = 1.0 - p
    z = (beta - alpha) * t
    total = np.zeros_like(t)
    with np.errstate(divide="ignore"):
        common = -beta * t + (m + 1) * np.log(t) - math.lgamma(m + 2)
    for r in range(m + 1):
        lb = math.lgamma(m + 1) - math.lgamma(r + 1) - math.lgamma(m - r + 1)
        lw = lb + r * math.log(alpha * p) + (m - r) * math.log(beta * q)
        k1 = kummer_1f1(r + 2, m + 2, z, tol)
        k0 = kummer_1f1(r, m + 2, z, tol)
        total = total + np.exp(lw + common) * (p * alpha * k1 + q * beta * k0)
    total = np.where(t == 0, 0.0, total)
    return float(total) if scalar else total


# -- mixed exponentials as power series in x = beta / (beta + s) --------------


def _exp_series(alpha, beta, coeff_tol):
    """Coefficients of ``alpha / (alpha + s)`` as a power series in ``beta / (beta + s)``."""
    if alpha == beta:
        return np.array([0.0, 1.0])
    ratio = alpha / beta
    rho = 1.0 - ratio
    n = max(2, int(math.ceil(math.log(coeff_tol * 1e-3) / math.log(rho))) + 2)
    out = np.zeros(n + 1)
    out[1:] = ratio * rho ** np.arange(n)
    return out


def _trim(w, coeff_tol):
    total = w.sum()
    if total <= 0:
        return w[:1]
    tail = np.cumsum(w[::-1])[::-1]
    keep = np.nonzero((tail > coeff_tol * total) | (w > coeff_tol * w.max()))[0]
    return w[: keep[-1] + 1] if keep.size else w[:1]


def mixedexp_lt_series(p, alpha, beta, coeff_tol=1e-14):
    """Power-series coefficients (index = Erlang order) of ``f``, ``f0``-forms and ``f1``-forms.

    Returns a function building the coefficient vector for the density
    ``w_a alpha e^{-alpha t} + w_b beta e^{-beta t}`` and of ``t`` times it.
    """
    a_series = _exp_series(alpha, beta, coeff_tol)
    a2 = np.convolve(a_series, a_series)
    x1 = np.array([0.0, 1.0])
    x2 = np.array([0.0, 0.0, 1.0])

    def density(wa, wb):
        out = wa * a_series.copy()
        out[: x1.size] += wb * x1
        return out

    def times_t(wa, wb):
        # t * alpha e^{-alpha t} has transform alpha/(alpha+s)^2 = A^2 / alpha
        out = (wa / alpha) * a2.copy()
        out[: x2.size] += (wb / beta) * x2
        return out

    return density, times_t


# -- term providers for the ruin-time series -----------------------------------


class GammaTerms:
    """Ordinary gamma arrivals: every convolution is a gamma density."""

    def __init__(self, family):
        self.shape = family.shape
        self.rate = family.rate

    def sup_hint(self):
        return math.inf if self.shape < 1 else None

    def log_f0(self, t):
        return gamma_logpdf(self.shape, self.rate, t)

    def iter_conv(self, t):
        n = 0
        lc = math.log(self.shape / self.rate)
        while True:
            a = self.shape * (n + 1)
            yield n, gamma_logpdf(a, self.rate, t), lc + gamma_logpdf(a + 1, self.rate, t)
            n += 1

    def iter_nfold(self, y):
        n = 1
        while True:
            yield n, gamma_logpdf(self.shape * n, self.rate, y)
            n += 1


class ErlangSeriesTerms:
    """Erlang-mixture convolutions built by power-series multiplication.

    ``f``, ``f0`` and ``f1`` are given as coefficient vectors indexed by
    Erlang order (index 0 must be zero).
    """

    def __init__(self, beta, f_coef, f0_coef, f1_coef, coeff_tol=1e-14, backend=None):
        self.beta = beta
        self.f = np.asarray(f_coef, dtype=float)
        self.f0 = np.asarray(f0_coef, dtype=float)
        self.f1 = np.asarray(f1_coef, dtype=float)
        self.coeff_tol = coeff_tol
        self.backend = backend

    def sup_hint(self):
        return None

    def _eval(self, coef, t):
        nz = np.nonzero(coef)[0]
        if nz.size == 0:
            return np.full(np.shape(t), -np.inf)
        lo = nz[0]
        with np.errstate(divide="ignore"):
            logw = np.log(coef[lo:])
        return _kernels.mixture_logpdf(logw, lo, self.beta, np.asarray(t, dtype=float), self.backend)

    def log_f0(self, t):
        return self._eval(self.f0, t)

    def iter_conv(self, t):
        g, h = self.f0, self.f1
        n = 0
        while True:
            yield n, self._eval(g, t), self._eval(h, t)
            g = _trim(np.convolve(g, self.f), self.coeff_tol)
            h = _trim(np.convolve(h, self.f), self.coeff_tol)
            n += 1

    def iter_nfold(self, y):
        g = self.f
        n = 1
        while True:
            yield n, self._eval(g, y)
            g = _trim(np.convolve(g, self.f), self.coeff_tol)
            n += 1


class MixedExpCoefficientTerms:
    """Ordinary mixed exponential arrivals through the gamma/eta coefficient formulas."""

    def __init__(self, family, coeff_tol=1e-14, backend=None, eta_form="derived"):
        self.family = family
        self.coeff_tol = coeff_tol
        self.backend = backend
        self.eta_form = eta_form

    def sup_hint(self):
        return None

    def _gamma(self, m):
        f = self.family
        return mixedexp_gamma_coeffs(f.p, f.alpha, f.beta, m, self.coeff_tol)

    def log_f0(self, t):
        return self._gamma(1).logpdf(t, self.backend)

    def iter_conv(self, t):
        f = self.family
        n = 0
        while True:
            g = self._gamma(n + 1)
            h = mixedexp_eta_coeffs(f.p, f.alpha, f.beta, n, self.coeff_tol, self.eta_form)
            yield n, g.logpdf(t, self.backend), h.logpdf(t, self.backend)
            n += 1

    def iter_nfold(self, y):
        n = 1
        while True:
            yield n, self._gamma(n).logpdf(y, self.backend)
            n += 1


class GridTerms:
    """Trapezoid convolutions on a uniform grid starting at zero.

    Values between grid nodes are linearly interpolated.  No error
    certification: accuracy is O(dt^2) for smooth densities.
    """

    def __init__(self, f_grid, f0_grid, backend=None):
        f_grid = f_grid.from_zero()
        f0_grid = f0_grid.from_zero()
        if not math.isclose(f_grid.dt, f0_grid.dt, rel_tol=1e-12):
            raise ModelError("inter-claim and delay grids must share the same step")
        self.dt = f_grid.dt
        self.f = f_grid.values
        self.f0 = f0_grid.values
        self.backend = backend
        self._cache = {}

    def sup_hint(self):
        return None

    def _n_out(self, t):
        tmax = float(np.max(t, initial=0.0))
        return int(math.ceil(tmax / self.dt)) + 2

    def _interp_log(self, values, t):
        grid_t = self.dt * np.arange(values.size)
        v = np.interp(np.asarray(t, dtype=float), grid_t, values, left=0.0, right=0.0)
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(v, 0.0))

    def _pad(self, values, n_out):
        if values.size >= n_out:
            return values[:n_out]
        return np.concatenate([values, np.zeros(n_out - values.size)])

    def log_f0(self, t):
        return self._interp_log(self.f0, t)

    def iter_conv(self, t):
        n_out = self._n_out(t)
        f = self._pad(self.f, n_out)
        g = self._pad(self.f0, n_out)
        times = self.dt * np.arange(n_out)
        h = g * times
        n = 0
        while True:
            yield n, self._interp_log(g, t), self._interp_log(h, t)
            g = _kernels.conv_trapz(f, g, n_out, self.dt, self.backend)
            h = _kernels.conv_trapz(f, h, n_out, self.dt, self.backend)
            n += 1

    def iter_nfold(self, y):
        n_out = self._n_out(y)
        f = self._pad(self.f, n_out)
        g = f
        n = 1
        while True:
            yield n, self._interp_log(g, y)
            g = _kernels.conv_trapz(f, g, n_out, self.dt, self.backend)
            n += 1


def sample_grid(density, dt, t_max, cdf=None):
    """Sample a density on ``0, dt, ..., >= t_max``.

    An infinite value at zero is replaced by the average over the first
    half-cell (needs ``cdf``), which keeps the trapezoid mass right.
    """
    n = int(math.ceil(t_max / dt)) + 1
    t = dt * np.arange(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.asarray(density(t), dtype=float)
    if not np.isfinite(v[0]):
        if cdf is None:
            raise SingularityError("density is infinite at zero and no cdf was supplied")
        v[0] = 2.0 * cdf(0.5 * dt) / dt
    return DensityGrid(0.0, dt, v)


def grid_convolve(a, b, backend=None):
    """Trapezoid convolution of two density grids that start at zero."""
    if not (isinstance(a, DensityGrid) and isinstance(b, DensityGrid)):
        raise ModelError("grid_convolve expects DensityGrid arguments")
    if a.t0 != 0 or b.t0 != 0:
        raise ModelError("grid_convolve requires grids starting at t0 = 0")
    if not math.isclose(a.dt, b.dt, rel_tol=1e-12):
        raise ModelError(f"grid steps differ: {a.dt} vs {b.dt}")
    n_out = len(a) + len(b) - 1
    out = _kernels.conv_trapz(a.values, b.values, n_out, a.dt, backend)
    # FFT rounding can leave tiny negatives where the result is ~0
    return DensityGrid(0.0, a.dt, np.maximum(out, 0.0))


def family_grid(family, dt, t_max):
    """The inter-claim density on a grid (the tabulated grid itself when given)."""
    if isinstance(family, Tabulated):
        return family.grid.from_zero()
    if isinstance(family, Gamma):
        cdf = lambda x: special.gammainc(family.shape, family.rate * x)  # noqa: E731
        return sample_grid(lambda t: family_pdf(family, t), dt, t_max, cdf)
    return sample_grid(lambda t: family_pdf(family, t), dt, t_max)


def terms_for(family, delay, path, cfg, t_max=None, backend=None):
    """Pick the convolution source for a (family, delay) pair.

    ``path`` is ``"closed"`` (explicit coefficient formulas where they exist)
    or ``"series"`` (family-specific mixture algebra, falling back to grid
    convolution).
    """
    if isinstance(family, Gamma) and isinstance(delay, Ordinary):
        return GammaTerms(family)
    if isinstance(family, MixedExponential) and isinstance(delay, Ordinary) and path == "closed":
        return MixedExpCoefficientTerms(family, cfg.coeff_tol, backend)
    if isinstance(family, MixedExponential) and isinstance(delay, (Ordinary, Stationary)):
        density, times_t = mixedexp_lt_series(family.p, family.alpha, family.beta, cfg.coeff_tol)
        f = density(family.p, family.q)
        if isinstance(delay, Ordinary):
            wa, wb = family.p, family.q
        else:
            wa, _, _ = stationary_mixture(family)
            wb = 1.0 - wa
        return ErlangSeriesTerms(family.beta, f, density(wa, wb), times_t(wa, wb), cfg.coeff_tol, backend)
    if isinstance(family, Gamma) and isinstance(delay, Stationary) and family.is_integer:
        k = int(family.shape)
        f = np.zeros(k + 1)
        f[k] = 1.0
        f0 = np.zeros(k + 1)
        f0[1:] = 1.0 / k
        f1 = np.zeros(k + 2)
        f1[2:] = np.arange(1, k + 1) / (k * family.rate)
        return ErlangSeriesTerms(family.rate, f, f0, f1, cfg.coeff_tol, backend)
    # everything else: grid convolution
    if t_max is None:
        raise UnsupportedError("grid convolution needs a finite horizon t_max")
    if isinstance(family, Tabulated):
        f_grid = family.grid.from_zero()
        dt = f_grid.dt
    else:
        dt = cfg.grid_dt
        f_grid = family_grid(family, dt, t_max)
    if isinstance(delay, Explicit):
        f0_grid = delay.grid.from_zero()
        if not math.isclose(f0_grid.dt, dt, rel_tol=1e-12):
            if isinstance(family, Tabulated):
                raise ModelError("tabulated family and explicit delay must share the grid step")
            dt = f0_grid.dt
            f_grid = family_grid(family, dt, t_max)
    elif isinstance(delay, Ordinary):
        f0_grid = f_grid
    else:
        mean, _ = moments(family)
        if not (math.isfinite(mean) and mean > 0):
            raise UnsupportedError("stationary delay with a non-integrable tail")
        f0_grid = sample_grid(lambda t: delay_density(family, delay, t), dt, max(t_max, f_grid.t_end))
    return GridTerms(f_grid, f0_grid, backend)
