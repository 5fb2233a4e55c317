"""Monte Carlo simulation of the surplus process.

Each path has its own SplitMix64 counter stream keyed by ``(seed, path)``,
so results do not depend on how paths are spread over threads.  Ruin can
only happen at claim instants (between claims the surplus drifts up at
rate ``c``), so a path is simulated claim by claim until the surplus goes
negative or the next claim falls after the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, prange, resolve_backend, set_threads
from .model import (Explicit, Gamma, MixedExponential, ModelError, Ordinary, Stationary, Tabulated,
                    stationary_mixture)
from .quadrature import ruin_prob_curve

RNG_ALGORITHM = "splitmix64, one counter stream per path keyed by (seed, path index)"
MAX_PATHS = 10**9

# law codes understood by the samplers
ERLANG, GAMMA, MIXEXP, TABLE, ERLANG_MIX, SIZE_BIASED_GAMMA, SIZE_BIASED_TABLE = range(7)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_PATHMUL = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    horizon: float
    seed: int = 0
    bin_width: float = 1.0

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or not 1 <= self.n_paths <= MAX_PATHS:
            raise ModelError(f"n_paths must be an integer in [1, {MAX_PATHS}], got {self.n_paths}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ModelError("horizon must be positive")
        if not (math.isfinite(self.bin_width) and self.bin_width > 0):
            raise ModelError("bin_width must be positive")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ModelError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class SimResult:
    bin_edges: np.ndarray
    counts: np.ndarray
    ruined_count: int
    survived_count: int
    n_paths: int
    seed: int
    backend: str
    rng: str = RNG_ALGORITHM
    std_errors: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ruined_count + self.survived_count != self.n_paths:
            raise ValueError("ruined + survived must equal n_paths")
        if int(self.counts.sum()) != self.ruined_count:
            raise ValueError("histogram mass must equal the ruined count")
        if self.std_errors is None:
            p = self.counts / self.n_paths
            object.__setattr__(self, "std_errors", np.sqrt(p * (1 - p) / self.n_paths))

    def ruin_frequency(self, t):
        """Fraction of paths ruined by ``t``; ``t`` must be a bin edge."""
        k = np.nonzero(np.isclose(self.bin_edges, t, rtol=0, atol=1e-9 * max(1.0, abs(t))))[0]
        if k.size == 0:
            raise ValueError(f"t = {t} is not a histogram bin edge")
        return float(self.counts[: k[0]].sum()) / self.n_paths

    def binomial_se(self, t):
        p = self.ruin_frequency(t)
        return math.sqrt(p * (1 - p) / self.n_paths)

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "seed": self.seed,
            "rng": self.rng,
            "backend": self.backend,
            "ruined_count": self.ruined_count,
            "survived_count": self.survived_count,
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "std_errors": self.std_errors.tolist(),
        }


# -- law encoding ---------------------------------------------------------------


def _table_arrays(grid, size_biased=False):
    g = grid.from_zero()
    t = g.times
    f = g.values * t if size_biased else g.values.copy()
    cdf = np.zeros_like(f)
    cdf[1:] = np.cumsum(0.5 * g.dt * (f[1:] + f[:-1]))
    if not cdf[-1] > 0:
        raise ModelError("tabulated density has no mass to sample from")
    return np.ascontiguousarray(t), np.ascontiguousarray(f), np.ascontiguousarray(cdf)


_EMPTY = np.zeros(1)


def encode_law(family, delay=None):
    """``(code, params, table_t, table_f, table_cdf)`` for the gap law, or for ``T_0`` when ``delay`` is given."""
    if delay is None or isinstance(delay, Ordinary):
        if isinstance(family, Gamma):
            code = ERLANG if family.is_integer else GAMMA
            return code, np.array([family.shape, family.rate, 0.0]), _EMPTY, _EMPTY, _EMPTY
        if isinstance(family, MixedExponential):
            return MIXEXP, np.array([family.p, family.alpha, family.beta]), _EMPTY, _EMPTY, _EMPTY
        if isinstance(family, Tabulated):
            return (TABLE, np.zeros(3)) + _table_arrays(family.grid)
        raise ModelError(f"no sampler for {family!r}")
    if isinstance(delay, Explicit):
        return (TABLE, np.zeros(3)) + _table_arrays(delay.grid)
    if not isinstance(delay, Stationary):
        raise ModelError(f"no sampler for {delay!r}")
    if isinstance(family, Gamma):
        if family.is_integer:
            return ERLANG_MIX, np.array([family.shape, family.rate, 0.0]), _EMPTY, _EMPTY, _EMPTY
        return SIZE_BIASED_GAMMA, np.array([family.shape, family.rate, 0.0]), _EMPTY, _EMPTY, _EMPTY
    if isinstance(family, MixedExponential):
        p_eq, a, b = stationary_mixture(family)
        return MIXEXP, np.array([p_eq, a, b]), _EMPTY, _EMPTY, _EMPTY
    if isinstance(family, Tabulated):
        return (SIZE_BIASED_TABLE, np.zeros(3)) + _table_arrays(family.grid, size_biased=True)
    raise ModelError(f"no sampler for {family!r}")


# -- numba kernel -------------------------------------------------------------------


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _path_key(seed, path):
    return _mix64(_mix64(np.uint64(seed)) + np.uint64(path) * _PATHMUL)


@njit(cache=True)
def _uniform(state):
    """Advance a splitmix64 state; returns (new_state, u in [0, 1))."""
    state = state + _GOLDEN
    z = _mix64(state)
    return state, float(z >> _S11) * _TWO53


@njit(cache=True)
def _exp1(state):
    state, u = _uniform(state)
    return state, -math.log1p(-u)


@njit(cache=True)
def _normal(state):
    state, u1 = _uniform(state)
    state, u2 = _uniform(state)
    return state, math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def _gamma1(state, a):
    """Unit-rate gamma variate (Marsaglia-Tsang; boosted for a < 1)."""
    boost = 1.0
    if a < 1.0:
        state, u = _uniform(state)
        boost = math.exp(math.log1p(-u) / a)
        a = a + 1.0
    d = a - 1.0 / 3.0
    cc = 1.0 / math.sqrt(9.0 * d)
    while True:
        state, x = _normal(state)
        v = 1.0 + cc * x
        if v <= 0.0:
            continue
        v = v * v * v
        state, u = _uniform(state)
        if math.log1p(-u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return state, d * v * boost


@njit(cache=True)
def _table_inverse(target, tt, ff, cdf):
    k = np.searchsorted(cdf, target, side="right") - 1
    if k < 0:
        k = 0
    if k >= tt.size - 1:
        return tt[tt.size - 1]
    dt = tt[k + 1] - tt[k]
    a = 0.5 * (ff[k + 1] - ff[k]) / dt
    b = ff[k]
    rem = target - cdf[k]
    disc = b * b + 4.0 * a * rem
    if disc < 0.0:
        disc = 0.0
    den = b + math.sqrt(disc)
    x = 2.0 * rem / den if den > 0.0 else 0.0
    if x > dt:
        x = dt
    return tt[k] + x


@njit(cache=True)
def _sample(state, code, prm, tt, ff, cdf):
    if code == ERLANG:
        k = int(prm[0])
        total = 0.0
        for _ in range(k):
            state, e = _exp1(state)
            total += e
        return state, total / prm[1]
    if code == GAMMA:
        state, g = _gamma1(state, prm[0])
        return state, g / prm[1]
    if code == MIXEXP:
        state, u = _uniform(state)
        state, e = _exp1(state)
        return state, e / (prm[1] if u < prm[0] else prm[2])
    if code == TABLE:
        state, u = _uniform(state)
        return state, _table_inverse(u * cdf[cdf.size - 1], tt, ff, cdf)
    if code == ERLANG_MIX:
        state, u = _uniform(state)
        k = int(u * prm[0]) + 1
        total = 0.0
        for _ in range(k):
            state, e = _exp1(state)
            total += e
        return state, total / prm[1]
    if code == SIZE_BIASED_GAMMA:
        state, u = _uniform(state)
        state, g = _gamma1(state, prm[0] + 1.0)
        return state, u * g / prm[1]
    # SIZE_BIASED_TABLE
    state, u = _uniform(state)
    state, w = _uniform(state)
    return state, w * _table_inverse(u * cdf[cdf.size - 1], tt, ff, cdf)


@njit(cache=True, parallel=True)
def _simulate_nb(n_paths, seed, u0, c, lam, horizon,
                 fcode, fprm, ft, ff, fcdf, dcode, dprm, dt_, df, dcdf):
    tau = np.full(n_paths, np.nan)
    first = np.empty(n_paths)
    for p in prange(n_paths):
        state = _path_key(seed, p)
        state, t0 = _sample(state, dcode, dprm, dt_, df, dcdf)
        first[p] = t0
        time = t0
        claims = 0.0
        while time <= horizon:
            state, e = _exp1(state)
            claims += e / lam
            if u0 + c * time - claims < 0.0:
                tau[p] = time
                break
            state, gap = _sample(state, fcode, fprm, ft, ff, fcdf)
            time += gap
    return tau, first


# -- numpy fallback ---------------------------------------------------------------
# Same streams and the same draw order as the kernel, vectorised across paths.


def _np_mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _np_uniform(state, idx):
    state[idx] += _GOLDEN
    return (_np_mix64(state[idx]) >> _S11).astype(np.float64) * _TWO53


def _np_exp1(state, idx):
    return -np.log1p(-_np_uniform(state, idx))


def _np_gamma1(state, idx, a):
    out = np.empty(idx.size)
    boost = np.ones(idx.size)
    if a < 1.0:
        boost = np.exp(np.log1p(-_np_uniform(state, idx)) / a)
        a = a + 1.0
    d = a - 1.0 / 3.0
    cc = 1.0 / math.sqrt(9.0 * d)
    pending = np.arange(idx.size)
    while pending.size:
        sub = idx[pending]
        u1 = _np_uniform(state, sub)
        u2 = _np_uniform(state, sub)
        x = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)
        v = 1.0 + cc * x
        pos = v > 0.0
        # the kernel draws the acceptance uniform only when v > 0
        acc = np.zeros(pending.size, dtype=bool)
        if np.any(pos):
            v3 = v[pos] ** 3
            u = _np_uniform(state, sub[pos])
            ok = np.log1p(-u) < 0.5 * x[pos] ** 2 + d - d * v3 + d * np.log(v3)
            where = np.nonzero(pos)[0][ok]
            out[pending[where]] = d * v3[ok]
            acc[where] = True
        pending = pending[~acc]
    return out * boost


def _np_table_inverse(target, tt, ff, cdf):
    k = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, tt.size - 1)
    last = k >= tt.size - 1
    k = np.minimum(k, tt.size - 2)
    dt = tt[k + 1] - tt[k]
    a = 0.5 * (ff[k + 1] - ff[k]) / dt
    b = ff[k]
    rem = target - cdf[k]
    disc = np.maximum(b * b + 4.0 * a * rem, 0.0)
    den = b + np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(den > 0, 2.0 * rem / den, 0.0)
    x = np.minimum(x, dt)
    return np.where(last, tt[-1], tt[k] + x)


def _np_erlang(state, idx, orders):
    total = np.zeros(idx.size)
    for j in range(int(orders.max(initial=0))):
        live = orders > j
        total[live] += _np_exp1(state, idx[live])
    return total


def _np_sample(state, idx, code, prm, tt, ff, cdf):
    if code == ERLANG:
        return _np_erlang(state, idx, np.full(idx.size, int(prm[0]))) / prm[1]
    if code == GAMMA:
        return _np_gamma1(state, idx, prm[0]) / prm[1]
    if code == MIXEXP:
        u = _np_uniform(state, idx)
        e = _np_exp1(state, idx)
        return e / np.where(u < prm[0], prm[1], prm[2])
    if code == TABLE:
        u = _np_uniform(state, idx)
        return _np_table_inverse(u * cdf[-1], tt, ff, cdf)
    if code == ERLANG_MIX:
        u = _np_uniform(state, idx)
        k = (u * prm[0]).astype(np.int64) + 1
        return _np_erlang(state, idx, k) / prm[1]
    if code == SIZE_BIASED_GAMMA:
        u = _np_uniform(state, idx)
        return u * _np_gamma1(state, idx, prm[0] + 1.0) / prm[1]
    u = _np_uniform(state, idx)
    w = _np_uniform(state, idx)
    return w * _np_table_inverse(u * cdf[-1], tt, ff, cdf)


def _simulate_np(n_paths, seed, u0, c, lam, horizon,
                 fcode, fprm, ft, ff, fcdf, dcode, dprm, dt_, df, dcdf, chunk=1 << 20):
    tau = np.full(n_paths, np.nan)
    first = np.empty(n_paths)
    for start in range(0, n_paths, chunk):
        stop = min(n_paths, start + chunk)
        paths = np.arange(start, stop, dtype=np.uint64)
        state = _np_mix64(_np_mix64(np.full(paths.size, seed, dtype=np.uint64)) + paths * _PATHMUL)
        idx = np.arange(paths.size)
        t0 = _np_sample(state, idx, dcode, dprm, dt_, df, dcdf)
        first[start:stop] = t0
        time = t0.copy()
        claims = np.zeros(paths.size)
        alive = idx[time <= horizon]
        while alive.size:
            claims[alive] += _np_exp1(state, alive) / lam
            ruined = u0 + c * time[alive] - claims[alive] < 0.0
            tau[start + alive[ruined]] = time[alive[ruined]]
            alive = alive[~ruined]
            if not alive.size:
                break
            time[alive] += _np_sample(state, alive, fcode, fprm, ft, ff, fcdf)
            alive = alive[time[alive] <= horizon]
    return tau, first


# -- public API -----------------------------------------------------------------------


def simulate_paths(params, family, delay, n_paths, horizon, seed=0, backend=None, threads=None):
    """Ruin times (NaN when no ruin by ``horizon``) and first gaps ``T_0`` per path."""
    backend = resolve_backend(backend)
    if not 0 <= int(seed) < 2**64:
        raise ModelError("seed must be an unsigned 64-bit integer")
    fl = encode_law(family)
    dl = encode_law(family, delay)
    args = (int(n_paths), np.uint64(seed), float(params.u), float(params.c), float(params.lam), float(horizon)) + fl + dl
    if backend == "numba":
        set_threads(threads)
        return _simulate_nb(*args)
    return _simulate_np(*args)


def histogram(tau, horizon, bin_width):
    nbins = max(1, int(math.ceil(horizon / bin_width * (1 - 1e-12))))
    edges = bin_width * np.arange(nbins + 1)
    edges[-1] = max(edges[-1], horizon)
    ruined = tau[np.isfinite(tau)]
    idx = np.minimum((ruined / bin_width).astype(np.int64), nbins - 1)
    counts = np.bincount(idx, minlength=nbins).astype(np.int64)
    return edges, counts


def simulate(params, family, delay, sim, backend=None, threads=None):
    """Simulate ``sim.n_paths`` surplus paths and histogram their ruin times."""
    backend = resolve_backend(backend)
    tau, _ = simulate_paths(params, family, delay, sim.n_paths, sim.horizon, sim.seed, backend, threads)
    edges, counts = histogram(tau, sim.horizon, sim.bin_width)
    ruined = int(counts.sum())
    return SimResult(edges, counts, ruined, sim.n_paths - ruined, sim.n_paths, int(sim.seed), backend)


@dataclass(frozen=True, eq=False)
class Comparison:
    expected: np.ndarray
    z: np.ndarray
    max_abs_z: float
    chi_square: float
    dof: int


def compare_to_density(result, q, quad_tol=1e-8, min_expected=10.0, backend=None):
    """Per-bin z-scores of a simulated histogram against the analytic density."""
    edges = result.bin_edges
    cum = np.array([r.value for r in ruin_prob_curve(q, edges[1:], quad_tol, backend)])
    mass = np.diff(np.concatenate([[0.0], cum]))
    n = result.n_paths
    expect = n * mass
    ok = expect >= min_expected
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (result.counts - expect) / np.sqrt(expect * (1 - mass))
    z = np.where(ok, z, 0.0)
    chi2 = float(np.sum(z[ok] ** 2))
    return Comparison(mass, z, float(np.max(np.abs(z), initial=0.0)), chi2, int(ok.sum()))
