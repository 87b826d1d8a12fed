"""Matrix-variate skew-t and generalized inverse Gaussian primitives.

Y ~ MVST(M, A, Sigma, Psi, nu) is the mixture Y = M + W A + sqrt(W) V with
W ~ InvGamma(nu/2, nu/2) and V matrix normal with row covariance Sigma and
column covariance Psi. Densities are assembled in log space from Cholesky
factors; no explicit inverses are formed.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.linalg import solve_triangular

from .special import (
    DomainError,
    bessel_k_ratio,
    dlog_bessel_k_dorder,
    digamma,
    log_bessel_k,
)

LOG_2PI = math.log(2.0 * math.pi)
# rho below this fraction of (delta + nu) is treated as exactly zero skewness
FLAT_SKEW = 1e-12


class DecompositionError(np.linalg.LinAlgError):
    """A covariance matrix failed its Cholesky factorization."""


def cholesky(matrix, name):
    try:
        return np.linalg.cholesky(np.asarray(matrix, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"{name} is not positive definite") from exc


def logdet_from_cholesky(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True)
class MvstParams:
    M: np.ndarray
    A: np.ndarray
    Sigma: np.ndarray
    Psi: np.ndarray
    nu: float

    def __post_init__(self):
        for field in ("M", "A", "Sigma", "Psi"):
            arr = np.array(getattr(self, field), dtype=float, ndmin=2)
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        n, p = self.M.shape
        if self.A.shape != (n, p) or self.Sigma.shape != (n, n) or self.Psi.shape != (p, p):
            raise ValueError(
                f"inconsistent shapes: M {self.M.shape}, A {self.A.shape}, "
                f"Sigma {self.Sigma.shape}, Psi {self.Psi.shape}")
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def shape(self):
        return self.M.shape


@dataclass(frozen=True)
class QuadForms:
    delta: float
    rho: float


@dataclass(frozen=True)
class GigParams:
    a: float
    b: float
    lam: float

    def __post_init__(self):
        a, b, lam = float(self.a), float(self.b), float(self.lam)
        if not all(math.isfinite(v) for v in (a, b, lam)) or a < 0 or b < 0:
            raise DomainError(f"invalid GIG parameters ({a}, {b}, {lam})")
        if not ((a > 0 and b > 0) or (a > 0 and lam > 0) or (b > 0 and lam < 0)):
            raise DomainError(f"GIG parameters ({a}, {b}, {lam}) violate the support conditions")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lam", lam)


def _whitened(Y, params):
    """Return L_S^{-1} (Y - M) L_P^{-T}, L_S^{-1} A L_P^{-T} and both Cholesky factors."""
    Ls = cholesky(params.Sigma, "Sigma")
    Lp = cholesky(params.Psi, "Psi")
    Y = np.array(Y, dtype=float, ndmin=2)
    if Y.shape != params.shape:
        raise ValueError(f"Y has shape {Y.shape}, expected {params.shape}")

    def whiten(B):
        left = solve_triangular(Ls, B, lower=True)
        return solve_triangular(Lp, left.T, lower=True).T

    return whiten(Y - params.M), whiten(params.A), Ls, Lp


def quad_forms(Y, params):
    R, A, _, _ = _whitened(Y, params)
    return QuadForms(delta=float(np.sum(R * R)), rho=float(np.sum(A * A)))


def matrix_t_logpdf_from_forms(delta, n, p, nu, logdet_sigma, logdet_psi):
    d = n * p
    return (math.lgamma(0.5 * (nu + d)) - math.lgamma(0.5 * nu) - 0.5 * d * math.log(math.pi * nu)
            - 0.5 * p * logdet_sigma - 0.5 * n * logdet_psi - 0.5 * (nu + d) * math.log1p(delta / nu))


def mvst_logpdf(Y, params):
    if not params.nu > 0:
        raise DomainError(f"nu must be positive, got {params.nu}")
    R, A, Ls, Lp = _whitened(Y, params)
    n, p = params.shape
    nu = params.nu
    d = n * p
    delta = float(np.sum(R * R))
    rho = float(np.sum(A * A))
    ld_s = logdet_from_cholesky(Ls)
    ld_p = logdet_from_cholesky(Lp)
    if rho < FLAT_SKEW * (delta + nu):
        return matrix_t_logpdf_from_forms(delta, n, p, nu, ld_s, ld_p)
    cross = float(np.sum(R * A))
    return (math.log(2.0) + 0.5 * nu * math.log(0.5 * nu) + cross - 0.5 * d * LOG_2PI
            - 0.5 * p * ld_s - 0.5 * n * ld_p - math.lgamma(0.5 * nu)
            - 0.25 * (nu + d) * math.log((delta + nu) / rho)
            + log_bessel_k(-0.5 * (nu + d), math.sqrt(rho * (delta + nu))))


def mvst_sample(params, rng_seed, size=None):
    """Draw from MVST; ``size=None`` returns one n x p matrix, else a (size, n, p) stack."""
    if not params.nu > 0:
        raise DomainError(f"nu must be positive, got {params.nu}")
    rng = np.random.default_rng(rng_seed)
    Ls = cholesky(params.Sigma, "Sigma")
    Lp = cholesky(params.Psi, "Psi")
    count = 1 if size is None else int(size)
    n, p = params.shape
    w = 1.0 / rng.gamma(0.5 * params.nu, 2.0 / params.nu, size=count)
    Z = rng.standard_normal((count, n, p))
    V = Ls @ Z @ Lp.T
    out = params.M + w[:, None, None] * params.A + np.sqrt(w)[:, None, None] * V
    return out[0] if size is None else out


def gig_logpdf(x, p):
    x = float(x)
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"GIG density needs x > 0, got {x}")
    a, b, lam = p.a, p.b, p.lam
    if b == 0.0:
        return lam * math.log(0.5 * a) - math.lgamma(lam) + (lam - 1.0) * math.log(x) - 0.5 * a * x
    if a == 0.0:
        return (-lam * math.log(0.5 * b) - math.lgamma(-lam) + (lam - 1.0) * math.log(x)
                - 0.5 * b / x)
    return (0.5 * lam * math.log(a / b) + (lam - 1.0) * math.log(x) - math.log(2.0)
            - log_bessel_k(lam, math.sqrt(a * b)) - 0.5 * (a * x + b / x))


@dataclass(frozen=True)
class GigMoments:
    e_w: float
    e_inv_w: float
    e_log_w: float


def gig_moments(p):
    """E(W), E(1/W), E(log W) for W ~ GIG(a, b, lam) with a, b > 0."""
    if not (p.a > 0 and p.b > 0):
        raise DomainError("gig_moments needs a > 0 and b > 0")
    omega = math.sqrt(p.a * p.b)
    ratio = bessel_k_ratio(p.lam, omega)
    if p.lam <= 0:
        e_inv_w = math.sqrt(p.a / p.b) * ratio - 2.0 * p.lam / p.b
    else:
        # same quantity via K_{lam+1} = K_{lam-1} + (2 lam / omega) K_lam, without cancellation
        e_inv_w = math.sqrt(p.a / p.b) / bessel_k_ratio(p.lam - 1.0, omega)
    return GigMoments(
        e_w=math.sqrt(p.b / p.a) * ratio,
        e_inv_w=e_inv_w,
        e_log_w=0.5 * math.log(p.b / p.a) + dlog_bessel_k_dorder(p.lam, omega),
    )


def inverse_gamma_moments(shape, scale):
    """Moments of InvGamma(shape, scale), the zero-skewness limit of the conditional law."""
    e_w = scale / (shape - 1.0) if shape > 1.0 else math.inf
    return GigMoments(e_w=e_w, e_inv_w=shape / scale, e_log_w=math.log(scale) - digamma(shape))


class _GigRouSampler:
    """Ratio-of-uniforms with mode shift for h(y) = y^(lam-1) exp(-omega (y + 1/y) / 2), lam >= 0."""

    def __init__(self, lam, omega):
        self.lam = lam
        self.omega = omega
        self.mode = ((lam - 1.0) + math.sqrt((lam - 1.0) ** 2 + omega * omega)) / omega
        self.log_h_mode = self._log_h(self.mode)
        m = self.mode

        def slope(y):
            return 2.0 / (y - m) + (lam - 1.0) / y - 0.5 * omega * (1.0 - 1.0 / (y * y))

        lo = m * 0.5
        while slope(lo) < 0:
            lo *= 0.5
        x_minus = optimize.brentq(slope, lo, m * (1.0 - 1e-12), xtol=1e-14, rtol=1e-14)
        hi = m * 2.0 + 1.0
        while slope(hi) > 0:
            hi *= 2.0
        x_plus = optimize.brentq(slope, m * (1.0 + 1e-12) + 1e-300, hi, xtol=1e-14, rtol=1e-14)
        self.v_minus = (x_minus - m) * math.exp(0.5 * (self._log_h(x_minus) - self.log_h_mode))
        self.v_plus = (x_plus - m) * math.exp(0.5 * (self._log_h(x_plus) - self.log_h_mode))

    def _log_h(self, y):
        return (self.lam - 1.0) * np.log(y) - 0.5 * self.omega * (y + 1.0 / y)

    def draw(self, rng, count):
        """Return (samples, acceptance rate)."""
        out = np.empty(count)
        filled = 0
        proposed = 0
        accepted = 0
        while filled < count:
            batch = max(16, int(1.6 * (count - filled)))
            u = rng.random(batch)
            v = self.v_minus + (self.v_plus - self.v_minus) * rng.random(batch)
            with np.errstate(divide="ignore", invalid="ignore"):
                y = v / u + self.mode
                keep = y > 0
                keep[keep] = 2.0 * np.log(u[keep]) <= self._log_h(y[keep]) - self.log_h_mode
            proposed += batch
            accepted += int(keep.sum())
            got = y[keep][: count - filled]
            out[filled:filled + got.size] = got
            filled += got.size
        return out, accepted / proposed


class _GigDominatingSampler:
    """Rejection from a piecewise dominating density for 0 <= lam < 1 and small omega,
    where the ratio-of-uniforms box becomes loose."""

    def __init__(self, lam, omega):
        self.lam = lam
        self.omega = omega
        self.mode = omega / ((1.0 - lam) + math.sqrt((1.0 - lam) ** 2 + omega * omega))
        self.x0 = omega / (1.0 - lam)
        self.xstar = max(self.x0, 2.0 / omega)
        self.k1 = math.exp(self._log_h(self.mode))
        self.area1 = self.k1 * self.x0
        if self.x0 < 2.0 / omega:
            self.k2 = math.exp(-omega)
            if lam > 0:
                self.area2 = self.k2 * ((2.0 / omega) ** lam - self.x0 ** lam) / lam
            else:
                self.area2 = self.k2 * math.log(2.0 / (omega * omega))
        else:
            self.k2 = 0.0
            self.area2 = 0.0
        self.k3 = self.xstar ** (lam - 1.0)
        self.area3 = 2.0 * self.k3 * math.exp(-0.5 * self.xstar * omega) / omega
        self.total = self.area1 + self.area2 + self.area3

    def _log_h(self, y):
        return (self.lam - 1.0) * np.log(y) - 0.5 * self.omega * (y + 1.0 / y)

    def draw(self, rng, count):
        out = np.empty(count)
        filled = 0
        proposed = 0
        accepted = 0
        lam, omega = self.lam, self.omega
        while filled < count:
            batch = max(16, int(1.6 * (count - filled)))
            u = rng.random(batch)
            v = self.total * rng.random(batch)
            x = np.empty(batch)
            env = np.empty(batch)
            r1 = v <= self.area1
            r2 = ~r1 & (v <= self.area1 + self.area2)
            r3 = ~(r1 | r2)
            x[r1] = self.x0 * v[r1] / self.area1
            env[r1] = self.k1
            if r2.any():
                w = v[r2] - self.area1
                if lam > 0:
                    x[r2] = (self.x0 ** lam + w * lam / self.k2) ** (1.0 / lam)
                else:
                    x[r2] = omega * np.exp(w * math.exp(omega))
                env[r2] = self.k2 * x[r2] ** (lam - 1.0)
            if r3.any():
                w = v[r3] - self.area1 - self.area2
                x[r3] = -2.0 / omega * np.log(
                    math.exp(-0.5 * self.xstar * omega) - w * omega / (2.0 * self.k3))
                env[r3] = self.k3 * np.exp(-0.5 * omega * x[r3])
            with np.errstate(divide="ignore", invalid="ignore"):
                keep = (x > 0) & (np.log(u * env) <= self._log_h(x))
            proposed += batch
            accepted += int(keep.sum())
            got = x[keep][: count - filled]
            out[filled:filled + got.size] = got
            filled += got.size
        return out, accepted / proposed


def gig_sample_with_rate(p, rng_seed, size):
    """GIG draws plus the empirical acceptance rate of the ratio-of-uniforms step."""
    if not (p.a > 0 and p.b > 0):
        raise DomainError("gig_sample needs a > 0 and b > 0")
    rng = np.random.default_rng(rng_seed)
    omega = math.sqrt(p.a * p.b)
    scale = math.sqrt(p.b / p.a)
    lam = abs(p.lam)
    if lam < 1.0 and omega <= 2.0 / 3.0 * math.sqrt(1.0 - lam):
        sampler = _GigDominatingSampler(lam, omega)
    else:
        sampler = _GigRouSampler(lam, omega)
    y, rate = sampler.draw(rng, int(size))
    if p.lam < 0:
        y = 1.0 / y
    return scale * y, rate


def gig_sample(p, rng_seed, size=None):
    draws, _ = gig_sample_with_rate(p, rng_seed, 1 if size is None else size)
    return float(draws[0]) if size is None else draws


def vec_skewt_logpdf(y, mu, gamma, Omega, nu):
    """Multivariate skew-t log density with mixing W ~ InvGamma(nu/2, nu/2)."""
    y = np.asarray(y, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    gamma = np.asarray(gamma, dtype=float).ravel()
    d = y.size
    if mu.size != d or gamma.size != d or np.shape(Omega) != (d, d):
        raise ValueError("inconsistent dimensions")
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    L = cholesky(Omega, "Omega")
    r = solve_triangular(L, y - mu, lower=True)
    g = solve_triangular(L, gamma, lower=True)
    quad = float(r @ r)
    skew = float(g @ g)
    half_logdet = 0.5 * logdet_from_cholesky(L)
    if skew < FLAT_SKEW * (quad + nu):
        return (math.lgamma(0.5 * (nu + d)) - math.lgamma(0.5 * nu) - 0.5 * d * math.log(math.pi * nu)
                - half_logdet - 0.5 * (nu + d) * math.log1p(quad / nu))
    s = math.sqrt((nu + quad) * skew)
    half = 0.5 * (nu + d)
    return ((1.0 - half) * math.log(2.0) - math.lgamma(0.5 * nu) - 0.5 * d * math.log(math.pi * nu)
            - half_logdet + log_bessel_k(half, s) + float(r @ g) + half * math.log(s)
            - half * math.log1p(quad / nu))
