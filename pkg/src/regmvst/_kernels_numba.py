"""numba-compiled kernels.

Everything here works on plain float64 arrays and signals invalid input with
NaN (or a status code) so the Python wrappers can raise proper exceptions.
All kernels release the GIL, so worker threads can run them concurrently.
"""

import math

import numpy as np
from numba import njit

# Taylor coefficients of 1/Gamma(1+z) about z=0 (computed at 60 digits).
_RGAMMA_SERIES = np.array([
    1.0, 0.5772156649015329, -0.6558780715202539, -0.04200263503409524,
    0.16653861138229148, -0.04219773455554433, -0.009621971527876973,
    0.0072189432466631, -0.0011651675918590652, -0.00021524167411495098,
    0.0001280502823881162, -2.013485478078824e-05, -1.2504934821426706e-06,
    1.133027231981696e-06, -2.056338416977607e-07, 6.116095104481416e-09,
    5.002007644469223e-09, -1.18127457048702e-09, 1.0434267116911005e-10,
    7.782263439905071e-12, -3.696805618642206e-12, 5.100370287454476e-13,
    -2.0583260535665066e-14, -5.348122539423018e-15, 1.2267786282382608e-15,
    -1.1812593016974588e-16, 1.1866922547516004e-18, 1.4123806553180319e-18,
    -2.29874568443537e-19, 1.7144063219273374e-20,
])

_EPS = 1e-16
_MAXIT = 100000
_TIE_GAP = 1e-6
_JITTER = 1e-10
# relative step of the order derivative of log K
FD_STEP = 1e-2
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True, nogil=True)
def _gamma_parts(mu):
    # gam1, gam2 of Temme's method plus 1/Gamma(1+mu) and 1/Gamma(1-mu),
    # summed from the series so gam1 has no cancellation near mu=0.
    gam1 = 0.0
    gam2 = 0.0
    pw = 1.0
    mu2 = mu * mu
    for k in range(0, _RGAMMA_SERIES.shape[0], 2):
        gam2 += _RGAMMA_SERIES[k] * pw
        gam1 -= _RGAMMA_SERIES[k + 1] * pw
        pw *= mu2
    return gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1


@njit(cache=True, nogil=True)
def _log_k_low(mu, x):
    """Return (log K_mu(x), K_{mu+1}(x)/K_mu(x)) for -1/2 <= mu <= 1/2."""
    if x < 2.0:
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _gamma_parts(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        mu2 = mu * mu
        for i in range(1, _MAXIT):
            ff = (i * ff + p + q) / (i * i - mu2)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        return math.log(total), total1 * (2.0 / x) / total
    # Steed's continued fraction, carried with the e^{-x} factor in log form
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d
    delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    q = a1
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    h = a1 * h
    logk = 0.5 * math.log(math.pi / (2.0 * x)) - x - math.log(s)
    ratio = (mu + x + 0.5 - h) / x
    return logk, ratio


@njit(cache=True, nogil=True)
def log_k_and_ratio(order, x):
    """log K_order(x) and K_{|order|+1}(x)/K_|order|(x) via upward log-space recurrence."""
    if not (x > 0.0) or not math.isfinite(x) or not math.isfinite(order):
        return math.nan, math.nan
    nu = abs(order)
    nl = int(nu + 0.5)
    mu = nu - nl
    logk, r = _log_k_low(mu, x)
    two_over_x = 2.0 / x
    for i in range(1, nl + 1):
        logk += math.log(r)
        r = (mu + i) * two_over_x + 1.0 / r
    return logk, r


@njit(cache=True, nogil=True)
def log_k(order, x):
    return log_k_and_ratio(order, x)[0]


@njit(cache=True, nogil=True)
def dlog_k_dorder(order, x):
    # central differences at h, h/2, h/4 with two Richardson sweeps
    h = FD_STEP * max(1.0, abs(order))
    d1 = (log_k(order + h, x) - log_k(order - h, x)) / (2.0 * h)
    d2 = (log_k(order + 0.5 * h, x) - log_k(order - 0.5 * h, x)) / h
    d3 = (log_k(order + 0.25 * h, x) - log_k(order - 0.25 * h, x)) / (0.5 * h)
    e1 = (4.0 * d2 - d1) / 3.0
    e2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * e2 - e1) / 15.0


@njit(cache=True, nogil=True)
def log_k_array(orders, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = log_k(orders[i], xs[i])
    return out


@njit(cache=True, nogil=True)
def ratio_array(orders, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = math.exp(log_k(orders[i] + 1.0, xs[i]) - log_k(orders[i], xs[i]))
    return out


@njit(cache=True, nogil=True)
def dlog_k_dorder_array(orders, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = dlog_k_dorder(orders[i], xs[i])
    return out


@njit(cache=True, nogil=True)
def digamma(x):
    if not (x > 0.0) or not math.isfinite(x):
        return math.nan
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (
        1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))))
    return acc + math.log(x) - 0.5 / x - tail


@njit(cache=True, nogil=True)
def trigamma(x):
    if not (x > 0.0) or not math.isfinite(x):
        return math.nan
    acc = 0.0
    while x < 10.0:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    tail = inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (
        1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))))))
    return acc + tail


@njit(cache=True, nogil=True)
def _cholesky_inplace(S, L, n):
    for j in range(n):
        s = S[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return False
        ljj = math.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, n):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / ljj
        for i in range(j):
            L[i, j] = 0.0
    return True


@njit(cache=True, nogil=True)
def build_grams(times, Y, X, offsets, rho1, rho2):
    """Per-subject Sigma^{-1} cross products for the DEC matrix at (rho1, rho2).

    status[i] is 0 (clean), 1 (needed jitter) or 2 (not positive definite).
    """
    nsub = offsets.shape[0] - 1
    p = Y.shape[1]
    q = X.shape[1]
    m = p + q + 1
    yy = np.zeros((nsub, p, p))
    xy = np.zeros((nsub, q, p))
    xx = np.zeros((nsub, q, q))
    oy = np.zeros((nsub, p))
    ox = np.zeros((nsub, q))
    oo = np.zeros(nsub)
    logdet = np.zeros(nsub)
    status = np.zeros(nsub, dtype=np.int64)
    nmax = 0
    for i in range(nsub):
        nmax = max(nmax, offsets[i + 1] - offsets[i])
    S = np.empty((nmax, nmax))
    L = np.empty((nmax, nmax))
    Z = np.empty((nmax, m))
    for i in range(nsub):
        lo = offsets[i]
        n = offsets[i + 1] - lo
        for j in range(n):
            S[j, j] = 1.0
            for k in range(j):
                gap = abs(times[lo + j] - times[lo + k])
                if gap == 0.0:
                    gap = _TIE_GAP
                v = rho1 ** (gap ** rho2)
                S[j, k] = v
                S[k, j] = v
        if not _cholesky_inplace(S, L, n):
            for j in range(n):
                S[j, j] += _JITTER
            status[i] = 1
            if not _cholesky_inplace(S, L, n):
                status[i] = 2
                continue
        ld = 0.0
        for j in range(n):
            ld += math.log(L[j, j])
        logdet[i] = 2.0 * ld
        # forward substitution L Z = [Y X 1]
        for j in range(n):
            for c in range(m):
                if c < p:
                    v = Y[lo + j, c]
                elif c < p + q:
                    v = X[lo + j, c - p]
                else:
                    v = 1.0
                for k in range(j):
                    v -= L[j, k] * Z[k, c]
                Z[j, c] = v / L[j, j]
        for c1 in range(m):
            for c2 in range(c1, m):
                v = 0.0
                for j in range(n):
                    v += Z[j, c1] * Z[j, c2]
                if c2 < p:
                    yy[i, c1, c2] = v
                    yy[i, c2, c1] = v
                elif c2 < p + q:
                    if c1 < p:
                        xy[i, c2 - p, c1] = v
                    else:
                        xx[i, c1 - p, c2 - p] = v
                        xx[i, c2 - p, c1 - p] = v
                else:
                    if c1 < p:
                        oy[i, c1] = v
                    elif c1 < p + q:
                        ox[i, c1 - p] = v
                    else:
                        oo[i] = v
    return yy, xy, xx, oy, ox, oo, logdet, status


@njit(cache=True, nogil=True)
def _residual_forms(yy, xy, xx, oy, ox, i, beta, grr, g1r):
    # grr = R' S^{-1} R with R = Y - X beta; g1r = 1' S^{-1} R
    p = yy.shape[1]
    q = xx.shape[1]
    for r in range(p):
        v = oy[i, r]
        for k in range(q):
            v -= ox[i, k] * beta[k, r]
        g1r[r] = v
    for r in range(p):
        for s in range(r, p):
            v = yy[i, r, s]
            for k in range(q):
                v -= beta[k, r] * xy[i, k, s] + xy[i, k, r] * beta[k, s]
                for l in range(q):
                    v += beta[k, r] * xx[i, k, l] * beta[l, s]
            grr[r, s] = v
            grr[s, r] = v


@njit(cache=True, nogil=True)
def _quad_terms(grr, g1r, oo_i, arow, psi_inv):
    p = grr.shape[0]
    delta = 0.0
    for r in range(p):
        for s in range(p):
            delta += psi_inv[r, s] * grr[s, r]
    pa = psi_inv @ arow
    rho = 0.0
    cross = 0.0
    for r in range(p):
        rho += arow[r] * pa[r]
        cross += g1r[r] * pa[r]
    return max(delta, 0.0), max(rho * oo_i, 0.0), cross


@njit(cache=True, nogil=True)
def loglik_terms(yy, xy, xx, oy, ox, oo, logdet, nrows, beta, arow, psi_inv,
                 logdet_psi, nu):
    nsub = oo.shape[0]
    p = yy.shape[1]
    out = np.empty(nsub)
    grr = np.empty((p, p))
    g1r = np.empty(p)
    lg_half_nu = math.lgamma(0.5 * nu)
    for i in range(nsub):
        _residual_forms(yy, xy, xx, oy, ox, i, beta, grr, g1r)
        delta, rho, cross = _quad_terms(grr, g1r, oo[i], arow, psi_inv)
        d = nrows[i] * p
        common = -0.5 * p * logdet[i] - 0.5 * nrows[i] * logdet_psi - lg_half_nu
        if rho < 1e-12 * (delta + nu):
            out[i] = (common + math.lgamma(0.5 * (nu + d)) - 0.5 * d * math.log(math.pi * nu)
                      - 0.5 * (nu + d) * math.log1p(delta / nu))
        else:
            kappa = math.sqrt(rho * (delta + nu))
            out[i] = (common + math.log(2.0) + 0.5 * nu * math.log(0.5 * nu) + cross
                      - 0.5 * d * LOG_2PI
                      - 0.25 * (nu + d) * math.log((delta + nu) / rho)
                      + log_k(0.5 * (nu + d), kappa))
    return out


@njit(cache=True, nogil=True)
def estep_terms(yy, xy, xx, oy, ox, oo, nrows, beta, arow, psi_inv, nu):
    """Conditional moments a=E(W|Y), b=E(1/W|Y), c=E(log W|Y) plus residual forms."""
    nsub = oo.shape[0]
    p = yy.shape[1]
    a = np.empty(nsub)
    b = np.empty(nsub)
    c = np.empty(nsub)
    grr_all = np.empty((nsub, p, p))
    g1r_all = np.empty((nsub, p))
    grr = np.empty((p, p))
    g1r = np.empty(p)
    for i in range(nsub):
        _residual_forms(yy, xy, xx, oy, ox, i, beta, grr, g1r)
        delta, rho, cross = _quad_terms(grr, g1r, oo[i], arow, psi_inv)
        d = nrows[i] * p
        bnu = delta + nu
        if rho < 1e-12 * bnu:
            shape = 0.5 * (nu + d)
            b[i] = (nu + d) / bnu
            a[i] = bnu / (nu + d - 2.0) if nu + d > 2.0 else math.inf
            c[i] = math.log(0.5 * bnu) - digamma(shape)
        else:
            lam = -0.5 * (nu + d)
            kappa = math.sqrt(rho * bnu)
            ratio = math.exp(log_k(lam + 1.0, kappa) - log_k(lam, kappa))
            a[i] = math.sqrt(bnu / rho) * ratio
            b[i] = math.sqrt(rho / bnu) * ratio + (nu + d) / bnu
            c[i] = 0.5 * math.log(bnu / rho) + dlog_k_dorder(lam, kappa)
        grr_all[i] = grr
        g1r_all[i] = g1r
    return a, b, c, grr_all, g1r_all
