"""Score vectors and information matrices for the simplified regression model
Y = X beta + E, E ~ MVST(0, 1 a', Sigma, Psi, nu) with a single free SPD Sigma.

Parameter order everywhere in this module is
(vec(beta), a, vech(Sigma), vech(Psi), nu); vec stacks columns and vech
stacks the columns of the lower triangle.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, solve_triangular

from . import _backend
from .model import fsum_rows
from .mvst import MvstParams, cholesky, mvst_sample
from .seeding import INFO_DRAWS, derive_seed
from .special import DomainError, digamma, trigamma

# Below this Bessel argument the score uses its s -> 0 limit.
SMALL_S = 1e-8
DRAW_CHUNK = 2000


def duplication_matrix(d):
    """D with vec(S) = D vech(S) for symmetric d x d S."""
    D = np.zeros((d * d, d * (d + 1) // 2))
    col = 0
    for j in range(d):
        for i in range(j, d):
            D[j * d + i, col] = 1.0
            D[i * d + j, col] = 1.0
            col += 1
    return D


def vech(S):
    S = np.asarray(S)
    d = S.shape[0]
    return np.concatenate([S[j:, j] for j in range(d)])


def unvech(v, d):
    S = np.zeros((d, d))
    pos = 0
    for j in range(d):
        m = d - j
        S[j:, j] = v[pos:pos + m]
        S[j, j:] = v[pos:pos + m]
        pos += m
    return S


def _bessel_terms(lam, s):
    """B = K'_lam(s)/K_lam(s) + lam/s = -K_{lam-1}(s)/K_lam(s), and 0.5 * d/dlam ln K_lam(s)."""
    k = _backend.kernels()
    orders = np.full(s.shape, lam)
    log_k = k.log_k_array(orders, s)
    log_km1 = k.log_k_array(np.abs(orders - 1.0), s)
    dlog = k.dlog_k_dorder_array(orders, s)
    return -np.exp(log_km1 - log_k), 0.5 * dlog


def _score_parts(Y, mu, gamma, Omega, nu):
    """Per-row gradients of the skew-t log density.

    Returns g_mu (m,d), g_gamma (m,d), G (m,d,d) = dl/dOmega as a symmetric
    matrix derivative, and g_nu (m,).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m, d = Y.shape
    L = cholesky(np.asarray(Omega, dtype=float), "Omega")
    Oinv = cho_solve((L, True), np.eye(d))
    Oinv = 0.5 * (Oinv + Oinv.T)
    diff = mu[None, :] - Y                       # mu - y
    u = diff @ Oinv                               # Omega^{-1}(mu - y), row form
    g_inv = Oinv @ gamma
    rho = np.einsum("md,md->m", diff, u)
    q = float(gamma @ g_inv)
    lam = 0.5 * (nu + d)
    s = np.sqrt((nu + rho) * q)
    small = s < SMALL_S
    B_over_s = np.empty(m)
    half_dlog_plus = np.empty(m)
    if np.any(~small):
        B, half_dlog = _bessel_terms(lam, s[~small])
        B_over_s[~small] = B / s[~small]
        half_dlog_plus[~small] = half_dlog + 0.5 * np.log(s[~small])
    if np.any(small):
        if lam <= 1.0:
            raise DomainError("the flat-skewness limit of the score needs nu + d > 2")
        B_over_s[small] = -1.0 / (nu + d - 2.0)
        half_dlog_plus[small] = 0.5 * (digamma(lam) + math.log(2.0))
    c_mu = B_over_s * q - (nu + d) / (nu + rho)
    c_gamma = B_over_s * (nu + rho)
    c_mumu = lam / (nu + rho) - 0.5 * B_over_s * q
    c_gg = -0.5 * B_over_s * (nu + rho)
    g_mu = c_mu[:, None] * u - g_inv[None, :]
    g_gamma = c_gamma[:, None] * g_inv[None, :] - u
    C = (c_mumu[:, None, None] * diff[:, :, None] * diff[:, None, :]
         + c_gg[:, None, None] * np.outer(gamma, gamma)[None]
         + 0.5 * (gamma[None, :, None] * diff[:, None, :] + diff[:, :, None] * gamma[None, None, :])
         - 0.5 * np.asarray(Omega)[None])
    G = Oinv[None] @ C @ Oinv[None]
    G = 0.5 * (G + np.transpose(G, (0, 2, 1)))
    g_nu = (-0.5 * (math.log(2.0) + digamma(0.5 * nu) + d / nu
                    - (nu + d) * rho / (nu * (nu + rho)) + np.log1p(rho / nu))
            + half_dlog_plus + 0.5 * B_over_s * q)
    return g_mu, g_gamma, G, g_nu


def skewt_score(y, mu, gamma, Omega, nu):
    """Gradient of the skew-t log density over (mu, gamma, vech(Omega), nu)."""
    y = np.asarray(y, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    gamma = np.asarray(gamma, dtype=float).ravel()
    d = y.size
    if mu.size != d or gamma.size != d or np.shape(Omega) != (d, d):
        raise ValueError("inconsistent dimensions")
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    g_mu, g_gamma, G, g_nu = _score_parts(y[None], mu, gamma, Omega, float(nu))
    D = duplication_matrix(d)
    return np.concatenate([g_mu[0], g_gamma[0], D.T @ G[0].reshape(-1, order="F"), [g_nu[0]]])


@dataclass(frozen=True)
class VecSkewTParams:
    """Parameters of the simplified model; b_vec = vec(beta), a_vec = skewness row."""
    b_vec: np.ndarray
    a_vec: np.ndarray
    Sigma: np.ndarray
    Psi: np.ndarray
    nu: float
    X: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        Sigma = np.array(self.Sigma, dtype=float, ndmin=2)
        Psi = np.array(self.Psi, dtype=float, ndmin=2)
        a = np.array(self.a_vec, dtype=float).ravel()
        b = np.array(self.b_vec, dtype=float).ravel()
        n, q = X.shape
        p = a.size
        if Sigma.shape != (n, n) or Psi.shape != (p, p) or b.size != p * q:
            raise ValueError("inconsistent parameter dimensions")
        cholesky(Sigma, "Sigma")
        cholesky(Psi, "Psi")
        if not self.nu > 0:
            raise DomainError("nu must be positive")
        for name, val in (("X", X), ("Sigma", Sigma), ("Psi", Psi), ("a_vec", a), ("b_vec", b)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def q(self):
        return self.X.shape[1]

    @property
    def p(self):
        return self.a_vec.size

    @property
    def beta(self):
        return self.b_vec.reshape(self.p, self.q).T

    @property
    def dim(self):
        n, p, q = self.n, self.p, self.q
        return p * q + p + n * (n + 1) // 2 + p * (p + 1) // 2 + 1

    def block_slices(self):
        n, p, q = self.n, self.p, self.q
        sizes = [("b", p * q), ("a", p), ("sigma", n * (n + 1) // 2), ("psi", p * (p + 1) // 2),
                 ("nu", 1)]
        out, start = {}, 0
        for name, size in sizes:
            out[name] = slice(start, start + size)
            start += size
        return out

    def vector_form(self):
        """(mu, gamma, Omega) of vec(Y) ~ ST_np."""
        mu = (self.X @ self.beta).reshape(-1, order="F")
        gamma = np.kron(self.a_vec, np.ones(self.n))
        return mu, gamma, np.kron(self.Psi, self.Sigma)

    def to_dict(self):
        return {"b_vec": self.b_vec.tolist(), "a_vec": self.a_vec.tolist(),
                "Sigma": self.Sigma.tolist(), "Psi": self.Psi.tolist(), "nu": self.nu,
                "X": self.X.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["b_vec"], d["a_vec"], d["Sigma"], d["Psi"], d["nu"], d["X"])


def regression_scores(Ys, params):
    """Per-draw score over (vec beta, a, vech Sigma, vech Psi, nu); Ys has shape (m, n, p)."""
    Ys = np.asarray(Ys, dtype=float)
    if Ys.ndim == 2:
        Ys = Ys[None]
    m = Ys.shape[0]
    n, p, q = params.n, params.p, params.q
    mu, gamma, Omega = params.vector_form()
    yv = np.transpose(Ys, (0, 2, 1)).reshape(m, n * p)
    g_mu, g_gamma, G, g_nu = _score_parts(yv, mu, gamma, Omega, params.nu)
    Gm = np.transpose(g_mu.reshape(m, p, n), (0, 2, 1))       # n x p matrix form
    g_b = np.transpose(params.X.T @ Gm, (0, 2, 1)).reshape(m, p * q)
    g_a = g_gamma.reshape(m, p, n).sum(axis=2)
    G4 = G.reshape(m, p, n, p, n)                              # [k, i, l, j]
    dSigma = np.einsum("mkilj,kl->mij", G4, params.Psi)
    dPsi = np.einsum("mkilj,ij->mkl", G4, params.Sigma)
    Dn, Dp = duplication_matrix(n), duplication_matrix(p)
    g_sigma = np.transpose(dSigma, (0, 2, 1)).reshape(m, n * n) @ Dn
    g_psi = np.transpose(dPsi, (0, 2, 1)).reshape(m, p * p) @ Dp
    return np.hstack([g_b, g_a, g_sigma, g_psi, g_nu[:, None]])


def regression_loglik(Y, params):
    """Log density of one n x p response under the simplified model (for checks)."""
    from .mvst import vec_skewt_logpdf
    mu, gamma, Omega = params.vector_form()
    return vec_skewt_logpdf(np.asarray(Y, dtype=float).reshape(-1, order="F"), mu, gamma, Omega,
                            params.nu)


def complete_info(params):
    """Complete-data information of one observation (latent scale observed)."""
    nu = params.nu
    if not nu > 2:
        raise DomainError(f"complete information needs nu > 2, got {nu}")
    n, p = params.n, params.p
    Sinv = cho_solve(cho_factor(params.Sigma, lower=True), np.eye(n))
    Pinv = cho_solve(cho_factor(params.Psi, lower=True), np.eye(p))
    Sinv, Pinv = 0.5 * (Sinv + Sinv.T), 0.5 * (Pinv + Pinv.T)
    ones = np.ones(n)
    X = params.X
    Dn, Dp = duplication_matrix(n), duplication_matrix(p)
    sl = params.block_slices()
    out = np.zeros((params.dim, params.dim))
    out[sl["b"], sl["b"]] = np.kron(Pinv, X.T @ Sinv @ X)
    out[sl["a"], sl["a"]] = nu / (nu - 2.0) * float(ones @ Sinv @ ones) * Pinv
    ba = np.kron(Pinv, (X.T @ Sinv @ ones)[:, None])
    out[sl["b"], sl["a"]] = ba
    out[sl["a"], sl["b"]] = ba.T
    out[sl["sigma"], sl["sigma"]] = 0.5 * p * Dn.T @ np.kron(Sinv, Sinv) @ Dn
    out[sl["psi"], sl["psi"]] = 0.5 * n * Dp.T @ np.kron(Pinv, Pinv) @ Dp
    cross = 0.5 * np.outer(Dn.T @ Sinv.reshape(-1, order="F"), Dp.T @ Pinv.reshape(-1, order="F"))
    out[sl["sigma"], sl["psi"]] = cross
    out[sl["psi"], sl["sigma"]] = cross.T
    out[sl["nu"], sl["nu"]] = 0.25 * trigamma(0.5 * nu) - 0.5 / nu
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class ObservedInfo:
    matrix: np.ndarray
    se: float
    se_matrix: np.ndarray
    draws: int
    scores: np.ndarray


def observed_info_mc(params, draws, seed, keep_scores=True):
    """Monte-Carlo mean of score outer products over draws from the model.

    Draws come in chunks of DRAW_CHUNK, chunk c seeded by derive_seed(seed,
    INFO_DRAWS, c), so the estimate does not depend on how chunks are scheduled.
    """
    if not params.nu > 4:
        raise DomainError(f"observed information needs nu > 4, got {params.nu}")
    draws = int(draws)
    if draws < 1000:
        raise ValueError("use at least 1000 draws")
    mvst = MvstParams(params.X @ params.beta, np.outer(np.ones(params.n), params.a_vec),
                      params.Sigma, params.Psi, params.nu)
    chunks = []
    for c, start in enumerate(range(0, draws, DRAW_CHUNK)):
        size = min(DRAW_CHUNK, draws - start)
        Ys = mvst_sample(mvst, derive_seed(seed, INFO_DRAWS, c), size=size)
        chunks.append(regression_scores(Ys, params))
    scores = np.vstack(chunks)
    outer = scores[:, :, None] * scores[:, None, :]
    mean = fsum_rows(outer) / draws
    mean = 0.5 * (mean + mean.T)
    se_matrix = outer.std(axis=0, ddof=1) / math.sqrt(draws)
    return ObservedInfo(matrix=mean, se=float(se_matrix.max()), se_matrix=se_matrix,
                        draws=draws, scores=scores if keep_scores else None)


@dataclass(frozen=True)
class RateMatrices:
    I_complete: np.ndarray
    I_observed: np.ndarray
    S: np.ndarray
    R: np.ndarray
    r_max: float
    s_min: float
    eigenvalues: np.ndarray


def rate_matrices(I_c, I_o):
    """Speed S = I_c^{-1} I_o and rate R = I - S, with spectra from I_c^{-1/2} I_o I_c^{-1/2}."""
    I_c = np.asarray(I_c, dtype=float)
    I_o = np.asarray(I_o, dtype=float)
    if I_c.shape != I_o.shape or I_c.shape[0] != I_c.shape[1]:
        raise ValueError("information matrices must be square and of equal size")
    try:
        L = np.linalg.cholesky(0.5 * (I_c + I_c.T))
    except np.linalg.LinAlgError as exc:
        raise DomainError("complete information is not positive definite") from exc
    S = cho_solve((L, True), I_o)
    R = np.eye(I_c.shape[0]) - S
    half = solve_triangular(L, solve_triangular(L, 0.5 * (I_o + I_o.T), lower=True).T,
                            lower=True)
    eig = eigh(0.5 * (half + half.T), eigvals_only=True)
    s_min = float(eig[0])
    return RateMatrices(I_complete=I_c, I_observed=I_o, S=S, R=R, r_max=1.0 - s_min,
                        s_min=s_min, eigenvalues=eig)


def identified_indices(params):
    """Coordinates left after fixing Sigma_11 (Sigma and Psi are only identified up to
    Sigma -> c Sigma, Psi -> Psi / c)."""
    keep = np.ones(params.dim, dtype=bool)
    keep[params.block_slices()["sigma"].start] = False
    return np.flatnonzero(keep)


def restrict(matrix, indices):
    return np.asarray(matrix)[np.ix_(indices, indices)]


def loewner_gap(I_c, I_o):
    """Smallest eigenvalue of I_c - I_o and its eigenvector."""
    vals, vecs = np.linalg.eigh(0.5 * ((I_c - I_o) + (I_c - I_o).T))
    return float(vals[0]), vecs[:, 0]
