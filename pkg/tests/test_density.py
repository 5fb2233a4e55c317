import math

import numpy as np
import pytest

from ruintime import DensityGrid, DensityQuery, Gamma, ModelParams, Ordinary, Stationary, Tabulated, density
from ruintime.density import (DomainError, KendallQuery, closed_form_available, conditional_density,
                              kendall_sigma_density)
from ruintime.convolve import gamma_conv_f1_ordinary
from ruintime.model import MixedExponential, ModelError, delay_density, gamma_logpdf

CASE_B = MixedExponential(1 / 3, 0.5, 2.0)
P = ModelParams(5.0, 1.3, 1.0)
T = np.array([0.3, 1.0, 4.0, 15.0, 40.0])


def test_closed_form_selection():
    assert closed_form_available(Gamma(3, 1), Ordinary())
    assert closed_form_available(Gamma(2, 1), Stationary())
    assert not closed_form_available(Gamma(3, 1), Stationary())
    assert not closed_form_available(Gamma(2.5, 1), Ordinary())
    assert closed_form_available(CASE_B, Ordinary())
    assert not closed_form_available(CASE_B, Stationary())
    with pytest.raises(ModelError):
        DensityQuery(P, Gamma(2.5, 1), path="closed")
    with pytest.raises(ModelError):
        DensityQuery(P, Gamma(2, 1), path="fast")
    assert DensityQuery(P, Gamma(2.5, 1)).resolved_path == "series"


@pytest.mark.parametrize("fam,delay", [(Gamma(1, 1), Ordinary()), (Gamma(3, 2), Ordinary()),
                                       (Gamma(2, 2), Stationary()), (CASE_B, Ordinary())])
def test_closed_matches_series(fam, delay):
    a = density(DensityQuery(P, fam, delay, path="closed"), T)
    b = density(DensityQuery(P, fam, delay, path="series"), T)
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_grid_path_matches_closed():
    dt = 2e-3
    t = dt * np.arange(15001)
    fam = Tabulated(DensityGrid(0.0, dt, np.exp(gamma_logpdf(2, 2, t))))
    got = density(DensityQuery(P, fam), [1.0, 4.0, 15.0])
    ref = density(DensityQuery(P, Gamma(2, 2)), [1.0, 4.0, 15.0])
    np.testing.assert_allclose(got, ref, rtol=1e-4)


def test_small_intensity_limit():
    # almost no claims: ruin at the first claim, plus a first-order term that
    # dominates in the far tail where f0 is tiny
    lam, u, c = 1e-9, 2.0, 1.5
    s = u + c * T
    first = np.exp(gamma_logpdf(4, 2, T)) * u + c * gamma_conv_f1_ordinary(2, 2, 1, T)
    ref = np.exp(-lam * s) * (delay_density(Gamma(2, 2), Ordinary(), T) + lam * first)
    np.testing.assert_allclose(density(DensityQuery(ModelParams(u, c, lam), Gamma(2, 2)), T), ref, rtol=1e-9)


def test_scalar_and_domain():
    q = DensityQuery(P, Gamma(2, 2))
    assert isinstance(density(q, 1.0), float)
    for bad in (0.0, -1.0, math.nan, math.inf):
        with pytest.raises(DomainError):
            density(q, bad)
    with pytest.raises(DomainError):
        density(q, [1.0, 0.0])


def test_density_nonnegative_and_unimodal_tail():
    q = DensityQuery(P, CASE_B)
    v = density(q, np.linspace(0.05, 60, 200))
    assert np.all(v >= 0)
    assert v[-1] < v.max()


def test_conditional_density_support():
    fam = Gamma(2, 2)
    assert conditional_density(P, fam, 2.0, 1.5) == 0.0
    assert conditional_density(P, fam, 2.0, 2.0) == 0.0
    assert conditional_density(P, fam, 2.0, 3.0) > 0
    out = conditional_density(P, fam, [0.5, 5.0], 3.0)
    assert out.shape == (2,) and out[1] == 0.0 and out[0] > 0
    with pytest.raises(DomainError):
        conditional_density(P, fam, -0.1, 3.0)


@pytest.mark.parametrize("fam", [Gamma(2, 2), Gamma(0.7, 1.0), CASE_B])
def test_kendall_matches_conditional(fam):
    v, t = 1.2, 5.0
    kq = KendallQuery(P, fam, v, P.u + P.c * t)
    assert P.c * kendall_sigma_density(kq) == pytest.approx(conditional_density(P, fam, v, t), rel=1e-10)


def test_kendall_validation():
    with pytest.raises(DomainError):
        KendallQuery(P, Gamma(2, 2), 0.0, 20.0)
    with pytest.raises(DomainError):
        KendallQuery(P, Gamma(2, 2), 1.0, P.u + P.c * 1.0)


def test_with_params_keeps_model():
    q = DensityQuery(P, Gamma(2, 2), Stationary(), path="series")
    q2 = q.with_params(u=0.0)
    assert q2.params == ModelParams(0.0, P.c, P.lam)
    assert q2.delay == Stationary() and q2.path == "series"
