import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from regmvst.dec import DecParams, TiedTimesWarning, dec_cholesky, dec_correlation, dec_grid
from regmvst.mvst import (GigParams, MvstParams, gig_logpdf, gig_moments, gig_sample,
                          gig_sample_with_rate, mvst_logpdf, mvst_sample, vec_skewt_logpdf)
from regmvst.special import DomainError

# (a, b, lam, E W, E 1/W, E log W) from mpmath quadrature of the GIG kernel at 30 digits
GIG_FROZEN = [
    (1.0, 1.0, 1.0, 2.6994839355937723, 0.69948393559377234, 0.69948393559377234),
    (2.0, 0.5, -3.5, 0.094594594594594595, 14.378378378378378, -2.5257591558151105),
    (0.3, 7.0, -12.0, 0.31667909820268456, 3.4421433899229722, -1.1942058404774005),
    (5.0, 5.0, 0.25, 1.146832528350208, 1.046832528350208, 0.045820005305038476),
    (0.05, 40.0, -2.0, 13.002266218846938, 0.11625283277355867, 2.3423058638339636),
]


def _spd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + d * np.eye(d)


def test_dec_correlation_values():
    t = np.array([0.0, 1.0, 3.0])
    R = dec_correlation(t, DecParams(0.5, 0.5))
    assert R[0, 1] == pytest.approx(0.5)
    assert R[0, 2] == pytest.approx(0.5 ** math.sqrt(3.0))
    assert R[1, 2] == pytest.approx(0.5 ** math.sqrt(2.0))
    assert np.allclose(R, R.T) and np.allclose(np.diag(R), 1.0)


def test_dec_limits_give_ar1_and_compound_symmetry():
    t = np.array([0.0, 1.0, 2.5, 4.0])
    ar1 = dec_correlation(t, DecParams(0.6, 1.0 - 1e-12))
    lag = np.abs(t[:, None] - t[None, :])
    np.testing.assert_allclose(ar1, 0.6 ** lag, rtol=1e-9)
    cs = dec_correlation(t, DecParams(0.6, 0.0))
    np.testing.assert_allclose(cs, np.where(lag == 0, 1.0, 0.6))


def test_dec_grid_shape():
    g = dec_grid()
    assert g.shape == (11,) and g[0] == 1e-5 and g[-1] == 1.0 - 1e-5
    np.testing.assert_allclose(g[1:-1], np.arange(1, 10) / 10)


def test_tied_times_warn_and_stay_factorizable():
    with pytest.warns(TiedTimesWarning):
        R = dec_correlation([0.0, 1.0, 1.0], DecParams(0.9, 0.8))
    np.linalg.cholesky(R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TiedTimesWarning)
        L, _ = dec_cholesky([0.0, 1.0, 1.0], DecParams(0.9, 0.8))
    assert np.all(np.isfinite(L))


def test_dec_rejects_out_of_range():
    with pytest.raises(DomainError):
        DecParams(1.0, 0.5)
    with pytest.raises(DomainError):
        DecParams(0.5, -0.1)


def _random_mvst(rng):
    n, p = rng.integers(1, 5), rng.integers(1, 4)
    return MvstParams(rng.normal(size=(n, p)), rng.normal(size=(n, p)) * rng.uniform(0, 2),
                      _spd(rng, n), _spd(rng, p), rng.uniform(0.5, 30.0))


def test_mvst_logpdf_equals_vectorised_skew_t():
    rng = np.random.default_rng(101)
    for _ in range(100):
        prm = _random_mvst(rng)
        Y = mvst_sample(prm, rng.integers(1 << 31))
        v = vec_skewt_logpdf(Y.reshape(-1, order="F"), prm.M.reshape(-1, order="F"),
                             prm.A.reshape(-1, order="F"), np.kron(prm.Psi, prm.Sigma), prm.nu)
        assert mvst_logpdf(Y, prm) == pytest.approx(v, abs=1e-10, rel=1e-12)


def test_mvst_density_integrates_to_one_and_reduces_to_t():
    prm = MvstParams([[0.3]], [[1.2]], [[1.0]], [[0.8]], 4.0)
    mass, _ = integrate.quad(lambda y: math.exp(mvst_logpdf([[y]], prm)), -np.inf, np.inf,
                             limit=200)
    assert mass == pytest.approx(1.0, abs=1e-8)
    sym = MvstParams([[0.3]], [[0.0]], [[1.0]], [[0.8]], 4.0)
    for y in (-3.0, 0.1, 2.0):
        ref = stats.t.logpdf(y, df=4.0, loc=0.3, scale=math.sqrt(0.8))
        assert mvst_logpdf([[y]], sym) == pytest.approx(ref, rel=1e-12)


def test_mvst_shape_errors():
    with pytest.raises(ValueError):
        MvstParams(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(2), np.eye(2), 3.0)
    prm = MvstParams(np.zeros((2, 1)), np.zeros((2, 1)), np.eye(2), np.eye(1), 3.0)
    with pytest.raises(ValueError):
        mvst_logpdf(np.zeros((3, 1)), prm)


@pytest.mark.parametrize("a,b,lam,ew,einv,elog", GIG_FROZEN)
def test_gig_moments_match_quadrature(a, b, lam, ew, einv, elog):
    m = gig_moments(GigParams(a, b, lam))
    assert m.e_w == pytest.approx(ew, rel=1e-9)
    assert m.e_inv_w == pytest.approx(einv, rel=1e-9)
    assert m.e_log_w == pytest.approx(elog, rel=1e-7, abs=1e-9)


def test_gig_inverse_gaussian_closed_form():
    # lam = -1/2 is inverse Gaussian with mean sqrt(b/a) in the (a, b) form
    m = gig_moments(GigParams(4.0, 4.0, -0.5))
    assert m.e_w == pytest.approx(1.0, rel=1e-13)
    sym = gig_moments(GigParams(2.0, 2.0, 0.0))
    assert sym.e_w == pytest.approx(sym.e_inv_w, rel=1e-13)


def test_gig_logpdf_normalised():
    prm = GigParams(1.3, 0.7, -4.0)
    mass, _ = integrate.quad(lambda x: math.exp(gig_logpdf(x, prm)), 0, np.inf, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("a,b,lam", [(1.0, 1.0, 1.0), (0.01, 0.01, 0.3), (3.0, 0.2, -6.0),
                                     (50.0, 50.0, 0.0), (0.5, 2.0, 25.0)])
def test_gig_sampler_mean_and_acceptance(a, b, lam):
    prm = GigParams(a, b, lam)
    draws, rate = gig_sample_with_rate(prm, 7, 40000)
    assert rate >= 0.3
    m = gig_moments(prm)
    # log W has finite variance for every parameter set, so check its mean
    lw = np.log(draws)
    assert abs(lw.mean() - m.e_log_w) < 5 * lw.std() / math.sqrt(draws.size)


def test_gig_sampler_deterministic_and_scalar():
    prm = GigParams(1.0, 2.0, -1.5)
    assert gig_sample(prm, 3) == gig_sample(prm, 3)
    assert np.array_equal(gig_sample(prm, 3, 5), gig_sample(prm, 3, 5))


def test_gig_parameter_validation():
    with pytest.raises(DomainError):
        GigParams(-1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        gig_moments(GigParams(1.0, 0.0, 1.0))
