"""Arbitrary-precision reference implementations used to freeze test values."""

import mpmath as mp


def log_bessel_k_integral(order, x, dps=40):
    # K_v(x) = int_0^inf exp(-x cosh t) cosh(v t) dt, integrated on a finite
    # window around the peak of the exponent; the tail is below 10^-dps.
    with mp.workdps(dps + 10):
        v = abs(mp.mpf(order))
        x = mp.mpf(x)
        peak = mp.asinh(v / x)
        top = -x * mp.cosh(peak) + v * peak
        cut = (dps + 20) * mp.log(10)
        hi = peak + 1
        while -x * mp.cosh(hi) + v * hi > top - cut:
            hi = peak + 2 * (hi - peak)
        f = lambda t: mp.exp(-x * mp.cosh(t) + v * t - top) * (1 + mp.exp(-2 * v * t)) / 2
        pts = sorted(set([mp.mpf(0), peak] + [peak + (hi - peak) * k / 8 for k in range(1, 9)]))
        return +(mp.log(mp.quad(f, pts)) + top)
