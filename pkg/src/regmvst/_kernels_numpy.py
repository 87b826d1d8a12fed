"""Vectorised numpy/scipy kernels with the same signatures as the numba ones.

Bessel values come from scipy's exponentially scaled ``kve``. Where that
overflows (large order, small argument) the log value is carried upward from
a low order by the ratio recurrence, or from the uniform large-order
expansion once the recurrence would be too long.
"""

import math

import numpy as np
from scipy import special

_TIE_GAP = 1e-6
_JITTER = 1e-10
# relative step of the order derivative of log K
FD_STEP = 1e-2
_RECURRENCE_LIMIT = 5000
LOG_2PI = math.log(2.0 * math.pi)


def _log_k_recurrence(nu, x):
    nl = np.floor(nu + 0.5).astype(np.int64)
    mu = nu - nl
    logk = np.log(special.kve(mu, x)) - x
    r = special.kve(mu + 1.0, x) / special.kve(mu, x)
    for i in range(1, int(nl.max(initial=0)) + 1):
        live = i <= nl
        logk = np.where(live, logk + np.log(r), logk)
        r = np.where(live, (mu + i) * (2.0 / x) + 1.0 / r, r)
    return logk


def _log_k_debye(nu, x):
    z = x / nu
    root = np.sqrt(1.0 + z * z)
    eta = root + np.log(z / (1.0 + root))
    t = 1.0 / root
    t2 = t * t
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0
    u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t2 ** 2 - 425425.0 * t2 ** 3) / 414720.0
    u4 = t2 * t2 * (4465125.0 - 94121676.0 * t2 + 349922430.0 * t2 ** 2
                    - 446185740.0 * t2 ** 3 + 185910725.0 * t2 ** 4) / 39813120.0
    series = 1.0 - u1 / nu + u2 / nu ** 2 - u3 / nu ** 3 + u4 / nu ** 4
    return 0.5 * np.log(np.pi / (2.0 * nu)) - nu * eta - 0.5 * np.log(root) + np.log(series)


def log_k_array(orders, xs):
    orders = np.asarray(orders, dtype=float)
    xs = np.asarray(xs, dtype=float)
    nu = np.abs(orders)
    bad_input = ~(np.isfinite(nu) & np.isfinite(xs) & (xs > 0))
    safe_x = np.where(bad_input, 1.0, xs)
    safe_nu = np.where(bad_input, 0.0, nu)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        scaled = special.kve(safe_nu, safe_x)
        out = np.log(scaled) - safe_x
    broken = ~np.isfinite(out) | (scaled <= 0)
    if broken.any():
        idx = np.flatnonzero(broken)
        short = nu[idx] <= _RECURRENCE_LIMIT
        if short.any():
            j = idx[short]
            out[j] = _log_k_recurrence(safe_nu[j], safe_x[j])
        if (~short).any():
            j = idx[~short]
            out[j] = _log_k_debye(safe_nu[j], safe_x[j])
    out[bad_input] = np.nan
    return out


def log_k(order, x):
    return float(log_k_array(np.array([order]), np.array([x]))[0])


def ratio_array(orders, xs):
    orders = np.asarray(orders, dtype=float)
    return np.exp(log_k_array(orders + 1.0, xs) - log_k_array(orders, xs))


def dlog_k_dorder_array(orders, xs):
    orders = np.asarray(orders, dtype=float)
    h = FD_STEP * np.maximum(1.0, np.abs(orders))
    d1 = (log_k_array(orders + h, xs) - log_k_array(orders - h, xs)) / (2.0 * h)
    d2 = (log_k_array(orders + 0.5 * h, xs) - log_k_array(orders - 0.5 * h, xs)) / h
    d3 = (log_k_array(orders + 0.25 * h, xs) - log_k_array(orders - 0.25 * h, xs)) / (0.5 * h)
    e1 = (4.0 * d2 - d1) / 3.0
    e2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * e2 - e1) / 15.0


def dlog_k_dorder(order, x):
    return float(dlog_k_dorder_array(np.array([order]), np.array([x]))[0])


def digamma(x):
    return float(special.digamma(x)) if x > 0 and math.isfinite(x) else math.nan


def trigamma(x):
    return float(special.polygamma(1, x)) if x > 0 and math.isfinite(x) else math.nan


def _dec_stack(T, rho1, rho2):
    gap = np.abs(T[:, :, None] - T[:, None, :])
    n = T.shape[1]
    off = ~np.eye(n, dtype=bool)
    gap = np.where(off & (gap == 0.0), _TIE_GAP, gap)
    with np.errstate(divide="ignore"):
        S = rho1 ** (gap ** rho2)
    S[:, np.arange(n), np.arange(n)] = 1.0
    return S


def _factor_stack(S):
    m, n, _ = S.shape
    status = np.zeros(m, dtype=np.int64)
    try:
        return np.linalg.cholesky(S), status
    except np.linalg.LinAlgError:
        pass
    L = np.zeros_like(S)
    for k in range(m):
        try:
            L[k] = np.linalg.cholesky(S[k])
        except np.linalg.LinAlgError:
            status[k] = 1
            try:
                L[k] = np.linalg.cholesky(S[k] + _JITTER * np.eye(n))
            except np.linalg.LinAlgError:
                status[k] = 2
                L[k] = np.eye(n)
    return L, status


def build_grams(times, Y, X, offsets, rho1, rho2):
    nsub = offsets.shape[0] - 1
    p = Y.shape[1]
    q = X.shape[1]
    yy = np.zeros((nsub, p, p))
    xy = np.zeros((nsub, q, p))
    xx = np.zeros((nsub, q, q))
    oy = np.zeros((nsub, p))
    ox = np.zeros((nsub, q))
    oo = np.zeros(nsub)
    logdet = np.zeros(nsub)
    status = np.zeros(nsub, dtype=np.int64)
    counts = np.diff(offsets)
    for n in np.unique(counts):
        idx = np.flatnonzero(counts == n)
        rows = offsets[idx][:, None] + np.arange(n)[None, :]
        L, st = _factor_stack(_dec_stack(times[rows], rho1, rho2))
        B = np.concatenate([Y[rows], X[rows], np.ones((idx.size, n, 1))], axis=2)
        Z = np.linalg.solve(L, B)
        G = np.einsum("kji,kjl->kil", Z, Z)
        yy[idx] = G[:, :p, :p]
        xy[idx] = G[:, p:p + q, :p]
        xx[idx] = G[:, p:p + q, p:p + q]
        oy[idx] = G[:, -1, :p]
        ox[idx] = G[:, -1, p:p + q]
        oo[idx] = G[:, -1, -1]
        logdet[idx] = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        status[idx] = st
    return yy, xy, xx, oy, ox, oo, logdet, status


def _residual_forms(yy, xy, xx, oy, ox, beta):
    bxy = np.einsum("kr,iks->irs", beta, xy)
    grr = yy - bxy - np.transpose(bxy, (0, 2, 1)) + np.einsum("kr,ikl,ls->irs", beta, xx, beta)
    grr = 0.5 * (grr + np.transpose(grr, (0, 2, 1)))
    g1r = oy - ox @ beta
    return grr, g1r


def _quad_terms(grr, g1r, oo, arow, psi_inv):
    delta = np.maximum(np.einsum("rs,isr->i", psi_inv, grr), 0.0)
    pa = psi_inv @ arow
    rho = np.maximum(oo * float(arow @ pa), 0.0)
    cross = g1r @ pa
    return delta, rho, cross


def loglik_terms(yy, xy, xx, oy, ox, oo, logdet, nrows, beta, arow, psi_inv, logdet_psi, nu):
    p = yy.shape[1]
    grr, g1r = _residual_forms(yy, xy, xx, oy, ox, beta)
    delta, rho, cross = _quad_terms(grr, g1r, oo, arow, psi_inv)
    d = nrows * p
    common = -0.5 * p * logdet - 0.5 * nrows * logdet_psi - math.lgamma(0.5 * nu)
    flat = rho < 1e-12 * (delta + nu)
    out = np.empty_like(delta)
    if flat.any():
        df = d[flat]
        out[flat] = (common[flat] + special.gammaln(0.5 * (nu + df)) - 0.5 * df * np.log(np.pi * nu)
                     - 0.5 * (nu + df) * np.log1p(delta[flat] / nu))
    skew = ~flat
    if skew.any():
        ds, dl, rh = d[skew], delta[skew], rho[skew]
        kappa = np.sqrt(rh * (dl + nu))
        out[skew] = (common[skew] + math.log(2.0) + 0.5 * nu * math.log(0.5 * nu) + cross[skew]
                     - 0.5 * ds * LOG_2PI - 0.25 * (nu + ds) * np.log((dl + nu) / rh)
                     + log_k_array(0.5 * (nu + ds), kappa))
    return out


def estep_terms(yy, xy, xx, oy, ox, oo, nrows, beta, arow, psi_inv, nu):
    p = yy.shape[1]
    grr, g1r = _residual_forms(yy, xy, xx, oy, ox, beta)
    delta, rho, _ = _quad_terms(grr, g1r, oo, arow, psi_inv)
    d = (nrows * p).astype(float)
    bnu = delta + nu
    a = np.empty_like(delta)
    b = np.empty_like(delta)
    c = np.empty_like(delta)
    flat = rho < 1e-12 * bnu
    if flat.any():
        df, bf = d[flat], bnu[flat]
        b[flat] = (nu + df) / bf
        with np.errstate(divide="ignore"):
            a[flat] = np.where(nu + df > 2.0, bf / (nu + df - 2.0), np.inf)
        c[flat] = np.log(0.5 * bf) - special.digamma(0.5 * (nu + df))
    skew = ~flat
    if skew.any():
        ds, bs, rs = d[skew], bnu[skew], rho[skew]
        lam = -0.5 * (nu + ds)
        kappa = np.sqrt(rs * bs)
        ratio = ratio_array(lam, kappa)
        a[skew] = np.sqrt(bs / rs) * ratio
        b[skew] = np.sqrt(rs / bs) * ratio + (nu + ds) / bs
        c[skew] = 0.5 * np.log(bs / rs) + dlog_k_dorder_array(lam, kappa)
    return a, b, c, grr, g1r
