"""Finite-time ruin probabilities by adaptive Gauss-Kronrod quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import DomainError, density
from .model import DensityGrid, Gamma, MixedExponential, ModelError, Tabulated, delay_singularity, moments

# 7-point Gauss / 15-point Kronrod nodes on [-1, 1]
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
W_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
W_GAUSS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes
_gidx = [1, 3, 5, 7, 9, 11, 13]
W_GAUSS[_gidx] = [_WG[0], _WG[1], _WG[2], _WG[3], _WG[2], _WG[1], _WG[0]]


class QuadratureError(ArithmeticError):
    """Adaptive quadrature ran out of evaluations before meeting its tolerance."""

    def __init__(self, message, value, error):
        super().__init__(f"{message} (best value {value!r}, error estimate {error:.3g})")
        self.value = value
        self.error = error


@dataclass(frozen=True)
class RuinProbResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"ruin probability {self.value} outside [0, 1]")
        if not (math.isfinite(self.abs_error_estimate) and self.abs_error_estimate >= 0):
            raise ValueError("error estimate must be finite and >= 0")


def _gk15_batch(f, lo, hi, power):
    """Kronrod estimates and |K - G| errors for panels [lo, hi].

    With ``power`` set, panels live in ``w = s**power`` space and the
    integrand is ``f(w**(1/power)) * w**(1/power - 1) / power``.
    """
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    if power is None:
        y = f(x.ravel()).reshape(x.shape)
    else:
        inv = 1.0 / power
        s = x ** inv
        y = f(s.ravel()).reshape(x.shape) * x ** (inv - 1.0) * inv
    k = half * (y @ W_KRONROD)
    g = half * (y @ W_GAUSS)
    return k, np.abs(k - g)


def integrate(f, breaks, tol, max_evals=2_000_000, power=None):
    """Integrate ``f`` (vectorised) over consecutive ``breaks`` intervals.

    Returns per-interval integrals and error estimates.  Panels are
    bisected in batches until the summed error estimate is below ``tol``.
    ``power`` applies the substitution ``w = s**power`` to the first
    interval, which absorbs an ``s**(power - 1)`` endpoint singularity.
    """
    breaks = np.asarray(breaks, dtype=float)
    nint = breaks.size - 1
    lo = breaks[:-1].copy()
    hi = breaks[1:].copy()
    owner = np.arange(nint)
    warped = np.zeros(nint, dtype=bool)
    if power is not None and nint:
        warped[0] = True
        lo[0], hi[0] = breaks[0] ** power, breaks[1] ** power

    def evaluate(lo, hi, warped):
        val = np.empty(lo.size)
        err = np.empty(lo.size)
        if np.any(~warped):
            val[~warped], err[~warped] = _gk15_batch(f, lo[~warped], hi[~warped], None)
        if np.any(warped):
            val[warped], err[warped] = _gk15_batch(f, lo[warped], hi[warped], power)
        return val, err

    val, err = evaluate(lo, hi, warped)
    evals = 15 * lo.size
    while err.sum() > tol:
        if evals > max_evals:
            per = np.bincount(owner, val, nint)
            raise QuadratureError("quadrature tolerance not met", float(per.sum()), float(err.sum()))
        split = err > max(tol / (4 * lo.size), 0.25 * err.max())
        mids = 0.5 * (lo[split] + hi[split])
        nlo = np.concatenate([lo[split], mids])
        nhi = np.concatenate([mids, hi[split]])
        nown = np.concatenate([owner[split], owner[split]])
        nwarp = np.concatenate([warped[split], warped[split]])
        nval, nerr = evaluate(nlo, nhi, nwarp)
        evals += 15 * nlo.size
        keep = ~split
        lo = np.concatenate([lo[keep], nlo])
        hi = np.concatenate([hi[keep], nhi])
        owner = np.concatenate([owner[keep], nown])
        warped = np.concatenate([warped[keep], nwarp])
        val = np.concatenate([val[keep], nval])
        err = np.concatenate([err[keep], nerr])
    # fixed reduction order: sort panels by position
    order = np.lexsort((lo, owner))
    per_val = np.bincount(owner[order], val[order], nint)
    per_err = np.bincount(owner[order], err[order], nint)
    return per_val, per_err, evals


def _power_for(q):
    a = delay_singularity(q.family, q.delay)
    return a + 1.0 if a < 0 else None


def ruin_prob_curve(q, times, quad_tol=1e-8, backend=None, max_evals=2_000_000):
    """``psi(u, t)`` for each ``t`` in ``times`` from one adaptive pass over ``[0, max(times)]``.

    The tolerance applies to the whole pass, so each returned value carries
    an error estimate no larger than ``quad_tol``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(~np.isfinite(times)):
        raise DomainError("ruin probability horizon must be finite and >= 0")
    positive = np.unique(times[times > 0])
    results = {}
    evals = 0
    if positive.size:
        breaks = np.concatenate([[0.0], positive])
        power = _power_for(q)
        if power is not None and breaks[1] > 1.0:
            breaks = np.insert(breaks, 1, 1.0)
        f = lambda t: density(q, t, backend)  # noqa: E731
        per_val, per_err, evals = integrate(f, breaks, quad_tol, max_evals, power)
        cum_val = np.cumsum(per_val)
        cum_err = np.cumsum(per_err)
        for k, b in enumerate(breaks[1:]):
            raw = float(cum_val[k])
            e = float(cum_err[k])
            if raw < -e or raw > 1.0 + e:
                raise QuadratureError("ruin probability outside [0, 1] beyond its error estimate", raw, e)
            results[float(b)] = (min(max(raw, 0.0), 1.0), e)
    out = []
    for t in times:
        if t == 0:
            out.append(RuinProbResult(0.0, 0.0, 0))
        else:
            v, e = results[float(t)]
            out.append(RuinProbResult(v, e, evals))
    return out


def ruin_prob(q, t, quad_tol=1e-8, backend=None, max_evals=2_000_000):
    """Probability of ruin by time ``t``: the integral of the density over ``(0, t]``."""
    return ruin_prob_curve(q, [t], quad_tol, backend, max_evals)[0]


def tabulate_density(q, t_max, dt, backend=None):
    """Density on ``dt, 2 dt, ..., t_max`` (``t = 0`` excluded)."""
    if not (t_max > 0 and math.isfinite(t_max)):
        raise DomainError("t_max must be positive")
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError("dt must be positive")
    if dt > t_max:
        raise DomainError("dt exceeds t_max")
    n = int(math.floor(t_max / dt * (1 + 1e-12)))
    t = dt * np.arange(1, n + 1)
    return DensityGrid(dt, dt, density(q, t, backend))


def _laplace(family, s):
    if isinstance(family, Gamma):
        return (family.rate / (family.rate + s)) ** family.shape
    if isinstance(family, MixedExponential):
        p, q, a, b = family.p, family.q, family.alpha, family.beta
        return p * a / (a + s) + q * b / (b + s)
    if isinstance(family, Tabulated):
        g = family.grid
        return float(np.trapezoid(np.exp(-s * g.times) * g.values, dx=g.dt))
    raise ModelError(f"unknown inter-claim family {family!r}")


class NoRootError(ArithmeticError):
    """The Lundberg equation has no positive root (net profit condition fails)."""


def adjustment_coefficient(params, family, xtol=1e-12):
    """Positive root ``R`` of ``lam / (lam - R) * L_f(c R) = 1`` by bisection on ``(0, lam)``."""
    lam, c = params.lam, params.c
    mean, _ = moments(family)
    if not c * mean > 1.0 / lam:
        raise NoRootError("net profit condition fails; the adjustment coefficient does not exist")

    def k(r):
        return math.log(lam / (lam - r)) + math.log(_laplace(family, c * r))

    lo = lam * 1e-8
    while k(lo) >= 0:
        lo *= 0.1
        if lo < lam * 1e-300:
            raise NoRootError("could not bracket the adjustment coefficient")
    hi = lam * (1 - 1e-15)
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if k(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lundberg_ultimate(params, family, u=None):
    """Ultimate ruin probability ``(1 - R/lam) e^{-R u}`` for an ordinary renewal start."""
    r = adjustment_coefficient(params, family)
    u = params.u if u is None else u
    return (1.0 - r / params.lam) * np.exp(-r * np.asarray(u, dtype=float))
