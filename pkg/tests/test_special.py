import math

import numpy as np
import pytest
from scipy import special as sp

from regmvst import _backend
from regmvst._kernels_numpy import FD_STEP
from regmvst.special import (DomainError, bessel_k_ratio, digamma, dlog_bessel_k_dorder,
                             log_bessel_k, log_bessel_k_array, trigamma)

from oracles import log_bessel_k_integral

# (order, x, log K_v(x), K_{v+1}/K_v, d/dv log K_v(x)); mpmath besselk at 40 digits
BESSEL_FROZEN = [
    (0.0, 1e-06, 2.6341483053069884094, 71780.078092983783428, 0.0),
    (0.5, 0.3, 0.52777775480769545828, 4.3333333333333334567, 0.82793343527350883465),
    (-2.5, 1.0, 1.1717015017000407375, 0.28571428571428571429, -1.4801898024126032264),
    (3.7, 0.02, 17.774017797627769775, 370.00370362302150691, 5.7723374422346356177),
    (10.0, 5.0, 2.2781451384736612693, 4.2574434304782905536, 1.4040131884000931553),
    (-7.25, 40.0, -40.974360922995969289, 0.84708400835690135507, -0.17813274564865538178),
    (50.0, 10.0, 62.893170152631150313, 10.100979116252969106, 2.3028008644875277073),
    (0.2, 700.0, -703.04989870789218621, 1.0009997860197312254, 0.00028551051532491305574),
    (120.0, 3.0, 403.65703003641825857, 80.01260302291826645, 4.3780130298119402502),
    (1.0, 0.001, 6.907751517131146853, 2000.0070237152226411, 7.0237152226827484312),
]


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    before = _backend.active_backend()
    _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(before)


@pytest.mark.parametrize("order,x,logk,ratio,dorder", BESSEL_FROZEN)
def test_log_bessel_k_matches_frozen_values(backend, order, x, logk, ratio, dorder):
    assert log_bessel_k(order, x) == pytest.approx(logk, rel=1e-12, abs=1e-12)
    assert bessel_k_ratio(order, x) == pytest.approx(ratio, rel=1e-11)
    # extrapolated differences: rounding noise ~ eps * |log K| / h, amplified by the stencil
    h = FD_STEP * max(1.0, abs(order))
    fd_noise = 64.0 * np.finfo(float).eps * max(1.0, abs(logk)) / h
    assert dlog_bessel_k_dorder(order, x) == pytest.approx(dorder, rel=1e-9, abs=fd_noise)


@pytest.mark.parametrize("order,x", [(0.3, 0.7), (4.5, 12.0), (-15.0, 2.0)])
def test_log_bessel_k_against_integral_representation(order, x):
    assert log_bessel_k(order, x) == pytest.approx(float(log_bessel_k_integral(order, x)),
                                                   rel=1e-12, abs=1e-12)


def test_backends_agree_on_a_wide_grid():
    orders = np.linspace(-60.0, 60.0, 241)
    xs = np.geomspace(1e-6, 900.0, orders.size)
    O, X = np.meshgrid(orders, xs)
    a = _backend.kernels("numba").log_k_array(O.ravel(), X.ravel())
    b = _backend.kernels("numpy").log_k_array(O.ravel(), X.ravel())
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11)


def test_order_symmetry_and_half_integer_closed_form(backend):
    for x in (0.01, 1.0, 30.0):
        assert log_bessel_k(-3.3, x) == pytest.approx(log_bessel_k(3.3, x), rel=1e-14)
        closed = 0.5 * math.log(math.pi / (2 * x)) - x
        assert log_bessel_k(0.5, x) == pytest.approx(closed, rel=1e-13, abs=1e-13)


def test_array_form_matches_scalar(backend):
    orders = np.array([0.0, 2.5, -8.0])
    xs = np.array([0.5, 3.0, 20.0])
    out = log_bessel_k_array(orders, xs)
    assert out == pytest.approx([log_bessel_k(o, x) for o, x in zip(orders, xs)], rel=1e-15)


def test_digamma_trigamma_match_scipy(backend):
    for x in (1e-3, 0.5, 1.0, 2.5, 17.0, 400.0):
        assert digamma(x) == pytest.approx(float(sp.digamma(x)), rel=1e-13, abs=1e-13)
        assert trigamma(x) == pytest.approx(float(sp.polygamma(1, x)), rel=1e-12)


@pytest.mark.parametrize("order,x", [(1.0, 0.0), (1.0, -2.0), (math.nan, 1.0), (1.0, math.inf),
                                     (2e6, 1.0)])
def test_domain_errors(order, x):
    with pytest.raises(DomainError):
        log_bessel_k(order, x)
