import numpy as np
import pytest
from scipy import integrate, special, stats

from ruintime import DensityQuery, Gamma, ModelParams, Ordinary, SimConfig, Stationary, Tabulated, simulate
from ruintime._accel import HAVE_NUMBA
from ruintime.model import DensityGrid, MixedExponential, ModelError, delay_density, gamma_logpdf
from ruintime.montecarlo import SimResult, compare_to_density, histogram, simulate_paths

pytestmark = pytest.mark.filterwarnings("ignore::ruintime.NetProfitWarning")

CASE_B = MixedExponential(1 / 3, 0.5, 2.0)
P = ModelParams(0.0, 1.1, 1.0)
BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


def _tabulated():
    dt = 0.01
    t = dt * np.arange(401)
    v = np.clip(1 - np.abs(t - 1.5) / 1.5, 0, None) / 1.5  # triangle on [0, 3]
    return Tabulated(DensityGrid(0.0, dt, v))


LAWS = [
    (Gamma(3, 2), Ordinary()),
    (Gamma(2.5, 2), Ordinary()),
    (Gamma(0.4, 1), Ordinary()),
    (CASE_B, Ordinary()),
    (_tabulated(), Ordinary()),
    (Gamma(3, 2), Stationary()),
    (Gamma(0.4, 1), Stationary()),
    (CASE_B, Stationary()),
    (_tabulated(), Stationary()),
]


def _cdf(family, delay):
    if isinstance(delay, Ordinary) and isinstance(family, Gamma):
        return lambda x: special.gammainc(family.shape, family.rate * np.asarray(x))
    x = np.linspace(0.0, 80.0, 800_001)
    cdf = integrate.cumulative_trapezoid(delay_density(family, delay, x), x, initial=0.0)
    return lambda v: np.interp(v, x, cdf)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("family,delay", LAWS)
def test_first_gap_law(backend, family, delay):
    _, t0 = simulate_paths(P, family, delay, 20_000, 5.0, seed=11, backend=backend)
    assert stats.kstest(t0, _cdf(family, delay)).pvalue > 1e-3


def test_backends_consume_the_same_streams():
    if not HAVE_NUMBA:
        pytest.skip("numba not installed")
    for family, delay in LAWS:
        a, ga = simulate_paths(P, family, delay, 5000, 30.0, 3, "numpy")
        b, gb = simulate_paths(P, family, delay, 5000, 30.0, 3, "numba")
        np.testing.assert_allclose(ga, gb, rtol=1e-12)
        np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
        np.testing.assert_allclose(a[~np.isnan(a)], b[~np.isnan(b)], rtol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_deterministic_per_seed(backend):
    cfg = SimConfig(20_000, 20.0, seed=5)
    a = simulate(P, Gamma(2, 2), Ordinary(), cfg, backend)
    b = simulate(P, Gamma(2, 2), Ordinary(), cfg, backend)
    c = simulate(P, Gamma(2, 2), Ordinary(), SimConfig(20_000, 20.0, seed=6), backend)
    assert a.counts.tobytes() == b.counts.tobytes()
    assert a.counts.tobytes() != c.counts.tobytes()


def test_thread_count_does_not_change_results():
    if not HAVE_NUMBA:
        pytest.skip("numba not installed")
    a, _ = simulate_paths(P, Gamma(2.5, 2), Ordinary(), 20_000, 20.0, 9, "numba", threads=1)
    b, _ = simulate_paths(P, Gamma(2.5, 2), Ordinary(), 20_000, 20.0, 9, "numba", threads=None)
    assert a.tobytes() == b.tobytes()


def test_simconfig_guards():
    for kw in (dict(n_paths=0, horizon=1), dict(n_paths=10**10, horizon=1), dict(n_paths=1.5, horizon=1),
               dict(n_paths=10, horizon=0), dict(n_paths=10, horizon=float("inf")),
               dict(n_paths=10, horizon=1, bin_width=0), dict(n_paths=10, horizon=1, seed=-1)):
        with pytest.raises(ModelError):
            SimConfig(**kw)


def test_result_invariants():
    edges = np.array([0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        SimResult(edges, np.array([1, 1]), 2, 7, 10, 0, "numpy")
    with pytest.raises(ValueError):
        SimResult(edges, np.array([1, 2]), 2, 8, 10, 0, "numpy")
    r = SimResult(edges, np.array([1, 2]), 3, 7, 10, 0, "numpy")
    assert r.ruin_frequency(1.0) == 0.1 and r.ruin_frequency(2.0) == 0.3
    with pytest.raises(ValueError):
        r.ruin_frequency(1.5)
    d = r.to_dict()
    assert d["ruined_count"] + d["survived_count"] == d["n_paths"]


def test_histogram_edges():
    tau = np.array([0.5, 1.0, 2.9, np.nan, 3.0])
    edges, counts = histogram(tau, 3.0, 1.0)
    np.testing.assert_array_equal(edges, [0, 1, 2, 3])
    np.testing.assert_array_equal(counts, [1, 1, 2])
    edges, _ = histogram(tau, 2.5, 1.0)
    assert edges[-1] == 3.0


def test_tiny_intensity_ruins_at_first_claim():
    # with almost no premium income per claim gap, every path is ruined at T_1
    params = ModelParams(0.0, 1.1, 1e-9)
    tau, t0 = simulate_paths(params, Gamma(2, 2), Ordinary(), 10_000, 1e3, 1)
    assert np.all(np.isfinite(tau))
    np.testing.assert_array_equal(tau, t0)


@pytest.mark.parametrize("family,delay", [(Gamma(2, 2), Ordinary()), (CASE_B, Stationary()),
                                          (Gamma(0.5, 0.5), Ordinary())])
def test_histogram_agrees_with_density(family, delay):
    params = ModelParams(2.0, 1.2, 1.0)
    res = simulate(params, family, delay, SimConfig(200_000, 20.0, 4, 2.0))
    cmp = compare_to_density(res, DensityQuery(params, family, delay, path="series"))
    assert cmp.max_abs_z < 4.5
    assert cmp.dof >= 5


def test_wrong_intensity_is_detected():
    res = simulate(P, Gamma(2, 2), Ordinary(), SimConfig(200_000, 20.0, 4, 2.0))
    cmp = compare_to_density(res, DensityQuery(ModelParams(0.0, 1.1, 1.2), Gamma(2, 2)))
    assert cmp.max_abs_z > 10


def test_no_ruin_means_no_tested_bins():
    params = ModelParams(500.0, 2.0, 1.0)
    res = simulate(params, Gamma(2, 2), Ordinary(), SimConfig(1000, 10.0, 0, 5.0))
    assert res.ruined_count == 0
    cmp = compare_to_density(res, DensityQuery(params, Gamma(2, 2)))
    assert cmp.dof == 0 and cmp.max_abs_z == 0.0 and cmp.chi_square == 0.0


def test_mixed_exponential_case_ordering():
    params = ModelParams(10.0, 1.1, 1.0)
    cases = [MixedExponential(1 / 4, 2 / 5, 2.0), CASE_B, MixedExponential(3 / 7, 3 / 5, 2.0)]
    freq = [simulate(params, f, Ordinary(), SimConfig(200_000, 80.0, 8, 40.0)) for f in cases]
    for t in (40.0, 80.0):
        a, b, c = (r.ruin_frequency(t) for r in freq)
        assert a > b > c
