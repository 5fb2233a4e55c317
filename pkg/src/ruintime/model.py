"""Domain types for the Sparre Andersen model with exponential claims.

The surplus is ``U(t) = u + c t - (X_1 + ... + X_N(t))`` where claims
``X_j ~ Exp(lam)`` arrive at the epochs of a delayed renewal process: the
first claim comes after ``T_0`` (law described by a :class:`DelaySpec`),
later gaps ``T_1, T_2, ...`` are i.i.d. with law described by an
inter-claim family.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special


class ModelError(ValueError):
    """Raised when model parameters violate a domain invariant."""


class UnsupportedError(ModelError):
    """Raised for family/delay combinations the library cannot handle."""


class NetProfitWarning(UserWarning):
    """Premium income does not exceed expected claims; ruin is certain."""


def _finite(name, value):
    if not math.isfinite(value):
        raise ModelError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    u: float
    c: float
    lam: float

    def __post_init__(self):
        for name in ("u", "c", "lam"):
            _finite(name, getattr(self, name))
        if self.u < 0:
            raise ModelError(f"initial surplus u must be >= 0, got {self.u}")
        if self.c <= 0:
            raise ModelError(f"premium rate c must be > 0, got {self.c}")
        if self.lam <= 0:
            raise ModelError(f"claim parameter lambda must be > 0, got {self.lam}")


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Values of a function on the uniform grid ``t0 + k*dt``."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size == 0:
            raise ModelError("grid values must be a non-empty 1-d sequence")
        if not (math.isfinite(self.t0) and self.t0 >= 0):
            raise ModelError(f"grid t0 must be finite and >= 0, got {self.t0}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ModelError(f"grid dt must be finite and > 0, got {self.dt}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ModelError("grid values must be finite and nonnegative")

    def __len__(self):
        return self.values.size

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.values.size - 1)

    def __call__(self, t):
        """Piecewise-linear interpolation; zero outside the grid."""
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.times, self.values, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    def integral(self):
        return float(np.trapezoid(self.values, dx=self.dt))

    def from_zero(self):
        """The same grid padded with zeros so that it starts at t = 0."""
        k = self.t0 / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ModelError("grid t0 must be a multiple of dt to align with t = 0")
        k = int(round(k))
        if k == 0:
            return self
        return DensityGrid(0.0, self.dt, np.concatenate([np.zeros(k), self.values]))


# -- inter-claim families ---------------------------------------------------


@dataclass(frozen=True)
class Gamma:
    """Gamma(shape, rate) inter-claim times; integer shape is Erlang."""

    shape: float
    rate: float

    def __post_init__(self):
        _finite("shape", self.shape)
        _finite("rate", self.rate)
        if self.shape <= 0:
            raise ModelError(f"gamma shape must be > 0, got {self.shape}")
        if self.rate <= 0:
            raise ModelError(f"gamma rate must be > 0, got {self.rate}")

    @property
    def is_integer(self):
        return float(self.shape).is_integer()


@dataclass(frozen=True)
class MixedExponential:
    """Density ``p*alpha*exp(-alpha t) + q*beta*exp(-beta t)`` with ``q = 1 - p``."""

    p: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("p", "alpha", "beta"):
            _finite(name, getattr(self, name))
        if not 0 < self.p < 1:
            raise ModelError(f"mixing weight p must lie in (0, 1), got {self.p}")
        if self.alpha <= 0:
            raise ModelError(f"alpha must be > 0, got {self.alpha}")
        if self.beta <= self.alpha:
            raise ModelError(f"mixed exponential requires beta > alpha, got alpha={self.alpha}, beta={self.beta}")

    @property
    def q(self):
        return 1.0 - self.p


@dataclass(frozen=True)
class Tabulated:
    grid: DensityGrid
    mass_tol: float = 1e-3

    def __post_init__(self):
        mass = self.grid.integral()
        if abs(mass - 1.0) > self.mass_tol:
            raise ModelError(f"tabulated density integrates to {mass:.6g}, not 1 (tolerance {self.mass_tol})")


InterClaimFamily = Union[Gamma, MixedExponential, Tabulated]


# -- delay specifications ---------------------------------------------------


@dataclass(frozen=True)
class Ordinary:
    """T_0 has the same law as T_1."""


@dataclass(frozen=True)
class Stationary:
    """T_0 follows the equilibrium law (1 - F(t)) / E[T_1]."""


@dataclass(frozen=True)
class Explicit:
    grid: DensityGrid
    mass_tol: float = 1e-3

    def __post_init__(self):
        mass = self.grid.integral()
        if abs(mass - 1.0) > self.mass_tol:
            raise ModelError(f"delay density integrates to {mass:.6g}, not 1 (tolerance {self.mass_tol})")


DelaySpec = Union[Ordinary, Stationary, Explicit]


@dataclass(frozen=True)
class SeriesConfig:
    tol: float = 1e-12
    max_terms: int = 10_000
    coeff_tol: float = 1e-14
    grid_dt: float = 1e-3

    def __post_init__(self):
        for name in ("tol", "coeff_tol", "grid_dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be positive, got {v}")
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ModelError(f"max_terms must be an integer >= 1, got {self.max_terms}")


@dataclass(frozen=True)
class Model:
    """A validated (params, family, delay) triple."""

    params: ModelParams
    family: InterClaimFamily
    delay: DelaySpec
    net_profit: bool
    warnings: tuple = field(default=())


def validate(params, family, delay=Ordinary()):
    """Check the model and attach the net-profit flag.

    Violating ``c * E[T_1] > 1 / lam`` is not an error (the density formula
    still holds); it is reported through ``Model.warnings`` and a
    :class:`NetProfitWarning`.
    """
    if not isinstance(params, ModelParams):
        raise ModelError("params must be a ModelParams instance")
    if not isinstance(family, (Gamma, MixedExponential, Tabulated)):
        raise ModelError(f"unknown inter-claim family {family!r}")
    if not isinstance(delay, (Ordinary, Stationary, Explicit)):
        raise ModelError(f"unknown delay specification {delay!r}")
    if isinstance(family, Tabulated):
        family.grid.from_zero()
    if isinstance(delay, Explicit):
        delay.grid.from_zero()
    mean, _ = moments(family)
    if isinstance(delay, Stationary) and not (math.isfinite(mean) and mean > 0):
        raise UnsupportedError("stationary delay needs an inter-claim law with finite positive mean")
    profit = params.c * mean > 1.0 / params.lam
    notes = ()
    if not profit:
        msg = (f"net profit condition fails: c*E[T1] = {params.c * mean:.6g} <= 1/lambda = "
               f"{1.0 / params.lam:.6g}; ultimate ruin is certain")
        warnings.warn(msg, NetProfitWarning, stacklevel=2)
        notes = (msg,)
    return Model(params, family, delay, profit, notes)


# -- distribution functions -------------------------------------------------


def moments(family):
    """Mean and variance of the inter-claim time."""
    if isinstance(family, Gamma):
        return family.shape / family.rate, family.shape / family.rate**2
    if isinstance(family, MixedExponential):
        p, q, a, b = family.p, family.q, family.alpha, family.beta
        m1 = p / a + q / b
        m2 = 2 * p / a**2 + 2 * q / b**2
        return m1, m2 - m1 * m1
    if isinstance(family, Tabulated):
        g = family.grid
        t, f = g.times, g.values
        mass = np.trapezoid(f, dx=g.dt)
        m1 = np.trapezoid(t * f, dx=g.dt) / mass
        m2 = np.trapezoid(t * t * f, dx=g.dt) / mass
        return float(m1), float(m2 - m1 * m1)
    raise ModelError(f"unknown inter-claim family {family!r}")


def gamma_logpdf(shape, rate, t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * math.log(rate) + (shape - 1.0) * np.log(t) - rate * t - math.lgamma(shape)
    if shape == 1.0:
        out = np.where(t == 0, math.log(rate), out)
    return np.where(t < 0, -np.inf, out)


def family_pdf(family, t):
    t = np.asarray(t, dtype=float)
    if isinstance(family, Gamma):
        out = np.exp(gamma_logpdf(family.shape, family.rate, t))
    elif isinstance(family, MixedExponential):
        p, q, a, b = family.p, family.q, family.alpha, family.beta
        out = np.where(t < 0, 0.0, p * a * np.exp(-a * np.maximum(t, 0)) + q * b * np.exp(-b * np.maximum(t, 0)))
    elif isinstance(family, Tabulated):
        out = np.asarray(family.grid(t), dtype=float)
    else:
        raise ModelError(f"unknown inter-claim family {family!r}")
    return out if out.ndim else float(out)


def family_sf(family, t):
    """Survival function P(T_1 > t)."""
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    if isinstance(family, Gamma):
        out = special.gammaincc(family.shape, family.rate * t)
    elif isinstance(family, MixedExponential):
        out = family.p * np.exp(-family.alpha * t) + family.q * np.exp(-family.beta * t)
    elif isinstance(family, Tabulated):
        g = family.grid.from_zero()
        cdf = _cumtrapz(g.values, g.dt)
        out = 1.0 - np.interp(t, g.times, cdf, right=cdf[-1])
        out = np.clip(out, 0.0, 1.0)
    else:
        raise ModelError(f"unknown inter-claim family {family!r}")
    return out if np.ndim(out) else float(out)


def _cumtrapz(values, dt):
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


def stationary_mixture(family):
    """Equilibrium law of a mixed exponential, itself mixed exponential.

    Returns ``(p_eq, alpha, beta)`` with ``f_0 = p_eq alpha e^{-alpha t} + (1-p_eq) beta e^{-beta t}``.
    """
    mean, _ = moments(family)
    return (family.p / family.alpha) / mean, family.alpha, family.beta


def delay_density(family, delay, t):
    """Density f_0 of the first inter-claim time T_0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ModelError("delay density is defined for t >= 0")
    if isinstance(delay, Ordinary):
        return family_pdf(family, t)
    if isinstance(delay, Explicit):
        out = np.asarray(delay.grid(t), dtype=float)
        return out if out.ndim else float(out)
    if not isinstance(delay, Stationary):
        raise ModelError(f"unknown delay specification {delay!r}")
    if isinstance(family, Gamma):
        k, b = family.shape, family.rate
        if family.is_integer:
            # 1 - F(t) for Erlang(k) is a finite Poisson sum
            j = np.arange(int(k))
            bt = b * t[..., None]
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = j * np.log(bt) - special.gammaln(j + 1) - bt
            logs = np.where((bt == 0) & (j == 0), 0.0, logs)
            sf = np.exp(logs).sum(axis=-1)
        else:
            sf = special.gammaincc(k, b * t)
        out = sf * b / k
    elif isinstance(family, MixedExponential):
        p_eq, a, b = stationary_mixture(family)
        out = p_eq * a * np.exp(-a * t) + (1 - p_eq) * b * np.exp(-b * t)
    elif isinstance(family, Tabulated):
        mean, _ = moments(family)
        if not (math.isfinite(mean) and mean > 0):
            raise UnsupportedError("stationary delay with a non-integrable tabulated tail")
        out = np.asarray(family_sf(family, t), dtype=float) / mean
    else:
        raise ModelError(f"unknown inter-claim family {family!r}")
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def delay_singularity(family, delay):
    """Exponent ``a`` with ``f_0(t) ~ t**a`` near zero, or 0 when bounded."""
    if isinstance(delay, Ordinary) and isinstance(family, Gamma) and family.shape < 1:
        return family.shape - 1.0
    return 0.0
