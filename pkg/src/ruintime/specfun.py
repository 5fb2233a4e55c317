"""Special functions used by the closed-form ruin-time densities.

Everything that can overflow (rising factorials, hypergeometric terms) is
carried as a log-magnitude plus sign; exponentiation happens last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


class ConvergenceError(ArithmeticError):
    """A series hit its term cap before meeting the requested tolerance."""


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is defined for x > 0 only")
    out = special.gammaln(arr)
    return out if out.ndim else float(out)


def _is_nonpos_int(a):
    return a <= 0 and float(a).is_integer()


def log_pochhammer(a, n):
    """``(log|(a)_n|, sign)`` for the rising factorial ``a (a+1) ... (a+n-1)``.

    A zero value is returned as ``(-inf, 0)``.
    """
    n = int(n)
    if n < 0:
        raise ValueError("pochhammer index must be >= 0")
    if n == 0:
        return 0.0, 1
    if _is_nonpos_int(a):
        k = int(-a)
        if n > k:
            return -math.inf, 0
        # all factors negative: (-1)^n k! / (k-n)!
        return math.lgamma(k + 1) - math.lgamma(k - n + 1), (-1) ** n
    if n <= 32:
        logmag, sign = 0.0, 1
        for k in range(n):
            f = a + k
            logmag += math.log(abs(f))
            if f < 0:
                sign = -sign
        return logmag, sign
    logmag = special.gammaln(a + n) - special.gammaln(a)
    sign = int(special.gammasgn(a + n) * special.gammasgn(a))
    return float(logmag), sign


def pochhammer(a, n):
    """Rising factorial ``(a)_n = Gamma(a + n) / Gamma(a)``, with ``(a)_0 = 1``."""
    if int(n) < 0:
        raise ValueError("pochhammer index must be >= 0")
    if int(n) <= 32:
        out = 1.0
        for k in range(int(n)):
            out *= a + k
        return out
    logmag, sign = log_pochhammer(a, n)
    return sign * math.exp(logmag) if sign else 0.0


@dataclass(frozen=True)
class HypergeometricSpec:
    """Parameters of ``pFq(numerator; denominator; z)``."""

    numerator: tuple
    denominator: tuple
    argument: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "numerator", tuple(float(b) for b in self.numerator))
        object.__setattr__(self, "denominator", tuple(float(c) for c in self.denominator))
        for c in self.denominator:
            if _is_nonpos_int(c):
                raise ValueError(f"denominator parameter {c} is a pole of the series")
        if len(self.numerator) > len(self.denominator):
            raise ValueError("only p <= q (entire) hypergeometric series are supported")
        z = np.asarray(self.argument, dtype=float)
        if np.any(~np.isfinite(z)) or np.any(z < 0):
            raise ValueError("hypergeometric argument must be finite and >= 0")


def log_hyp_pfq(numerator, denominator, z, tol=1e-15, max_terms=100_000):
    """Log-magnitude and sign of ``pFq(numerator; denominator; z)``.

    The series is summed by term recursion in scaled form, so ``z`` in the
    millions is fine.  Summation stops once the ratio of consecutive terms
    is below one, the index has passed every parameter, and the geometric
    tail bound ``|term| r / (1 - r)`` is below ``tol * max(1, |sum|)``.
    Vectorised over ``z``.
    """
    spec = HypergeometricSpec(numerator, denominator, z)
    b = np.array(spec.numerator)
    c = np.array(spec.denominator)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    with np.errstate(divide="ignore"):
        logz = np.log(z)

    # scaled running sum: total = acc * exp(shift)
    acc = np.ones_like(z)
    shift = np.zeros_like(z)
    lterm = np.zeros_like(z)
    sterm = np.ones_like(z)
    done = z == 0
    pmax = max([abs(v) for v in spec.numerator + spec.denominator] + [0.0])
    terminating = any(_is_nonpos_int(v) for v in spec.numerator)

    m = 0
    while not np.all(done):
        if m >= max_terms:
            raise ConvergenceError(f"pFq series did not converge within {max_terms} terms")
        fb = b + m
        fc = c + m
        if terminating and np.any(fb == 0):
            break
        logratio = np.sum(np.log(np.abs(fb))) - np.sum(np.log(np.abs(fc))) - math.log(m + 1)
        sgn = (-1) ** int(np.sum(fb < 0) + np.sum(fc < 0))
        lterm = lterm + logratio + logz
        sterm = sterm * sgn
        m += 1

        active = ~done
        bigger = lterm > shift
        new_acc = np.where(bigger, acc * np.exp(np.minimum(shift - lterm, 0.0)) + sterm,
                           acc + sterm * np.exp(np.minimum(lterm - shift, 0.0)))
        new_shift = np.where(bigger, lterm, shift)
        acc = np.where(active, new_acc, acc)
        shift = np.where(active, new_shift, shift)

        if m > pmax:
            nb = b + m
            nc = c + m
            r = np.exp(np.sum(np.log(np.abs(nb))) - np.sum(np.log(np.abs(nc))) - math.log(m + 1) + logz)
            with np.errstate(divide="ignore", invalid="ignore"):
                logtail = lterm + np.log(r) - np.log1p(-np.minimum(r, 0.999999))
            logsum = shift + np.log(np.abs(acc))
            ok = (r < 1) & (logtail < math.log(tol) + np.maximum(logsum, 0.0))
            done = done | ok

    with np.errstate(divide="ignore"):
        logmag = shift + np.log(np.abs(acc))
    sign = np.sign(acc)
    return logmag, sign


def hyp_pfq(numerator, denominator, z, tol=1e-15, max_terms=100_000):
    """Generalised hypergeometric series ``pFq`` for ``z >= 0`` and ``p <= q``.

    >>> round(hyp_pfq([2.0], [2.0], 1.0), 12) == round(math.e, 12)
    True
    """
    scalar = np.ndim(z) == 0
    logmag, sign = log_hyp_pfq(numerator, denominator, z, tol, max_terms)
    out = sign * np.exp(logmag)
    return float(out[0]) if scalar else out


def pfq(spec, tol=1e-15, max_terms=100_000):
    return hyp_pfq(spec.numerator, spec.denominator, spec.argument, tol, max_terms)


def kummer_1f1(a, b, z, tol=1e-15, max_terms=100_000):
    """Confluent hypergeometric function ``1F1(a; b; z)`` for ``z >= 0``."""
    return hyp_pfq([a], [b], z, tol, max_terms)


def log_kummer_1f1(a, b, z, tol=1e-15, max_terms=100_000):
    return log_hyp_pfq([a], [b], z, tol, max_terms)


def bessel_i(v, z):
    """Modified Bessel function ``I_v(z)`` of integer order by its power series.

    Deliberately independent of :func:`hyp_pfq`.
    """
    v = int(v)
    if v < 0:
        raise ValueError("order must be a nonnegative integer")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("bessel_i is implemented for z >= 0")
    half = 0.5 * z
    quarter = half * half
    term = np.power(half, v) / math.factorial(v)
    total = term.copy()
    k = 0
    while True:
        term = term * quarter / ((k + 1) * (k + 1 + v))
        total = total + term
        k += 1
        if k > half.max(initial=0.0) + 2 and np.all(term <= 1e-17 * total):
            break
    return total if total.ndim else float(total)
