"""Synthetic longitudinal data for the three simulation schemes.

Schemes 1 and 2 share a generator (they differ only in sample size and in how
the fits are used). Scheme 3 swaps the inverse-gamma mixing variable for a
GIG(omega, omega, lambda) draw with omega = lambda = 1, which gives
generalized-hyperbolic errors that the fitted model does not contain.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .dec import DecParams, dec_cholesky
from .model import Dataset, Subject, Theta
from .mvst import GigParams, MvstParams, gig_sample, mvst_sample
from .seeding import SIMULATE, derive_seed

GH_OMEGA = 1.0
GH_LAMBDA = 1.0


def default_truth():
    return Theta(beta=[[0.5, 0.5], [1.5, 1.5], [-0.5, -0.5]], a_row=[2.0, -2.0],
                 psi=[[1.0, -0.5], [-0.5, 1.0]], nu=5.0, dec=DecParams(0.9, 0.8))


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    N: int
    seed: int
    truth: Theta = None

    def __post_init__(self):
        if self.scheme not in ("s1s2", "s3"):
            raise ValueError(f"scheme must be 's1s2' or 's3', got {self.scheme!r}")
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if self.truth is None:
            object.__setattr__(self, "truth", default_truth())


def bernoulli_mean(t):
    """Success probability 2*Phi(|t| - 1), clamped to [0, 1]."""
    return np.clip(2.0 * ndtr(np.abs(t) - 1.0), 0.0, 1.0)


def _design(rng):
    n = int(rng.poisson(8.0)) + 2
    t = np.sort(np.abs(rng.standard_normal(n)))
    x = np.column_stack([rng.exponential(1.0, n), rng.standard_normal(n),
                         (rng.random(n) < bernoulli_mean(t)).astype(float)])
    return t, x


def _subject(i, cfg, mixing):
    truth = cfg.truth
    rng = np.random.default_rng(derive_seed(cfg.seed, SIMULATE, i))
    t, x = _design(rng)
    if x.shape[1] != truth.q:
        raise ValueError(f"generators produce 3 covariates; truth has q={truth.q}")
    n = t.size
    with warnings.catch_warnings():
        # |N(0,1)| draws tie with probability zero; the warning would only be noise
        warnings.simplefilter("ignore")
        L, _ = dec_cholesky(t, truth.dec)
    Sigma = L @ L.T
    A = np.outer(np.ones(n), truth.a_row)
    noise_seed = derive_seed(cfg.seed, SIMULATE, i, 1)
    if mixing == "inverse_gamma":
        E = mvst_sample(MvstParams(np.zeros((n, truth.p)), A, Sigma, truth.psi, truth.nu),
                        noise_seed)
    else:
        nrng = np.random.default_rng(noise_seed)
        w = float(gig_sample(GigParams(GH_OMEGA, GH_OMEGA, GH_LAMBDA), nrng))
        Z = nrng.standard_normal((n, truth.p))
        E = w * A + np.sqrt(w) * (L @ Z @ np.linalg.cholesky(truth.psi).T)
    return Subject(x @ truth.beta + E, x, t, id=i + 1)


def _generate(cfg, mixing):
    subjects = [_subject(i, cfg, mixing) for i in range(int(cfg.N))]
    return Dataset(subjects), cfg.truth


def gen_scheme12(cfg):
    if cfg.scheme != "s1s2":
        raise ValueError("gen_scheme12 needs scheme='s1s2'")
    return _generate(cfg, "inverse_gamma")


def gen_scheme3(cfg):
    if cfg.scheme != "s3":
        raise ValueError("gen_scheme3 needs scheme='s3'")
    return _generate(cfg, "gig")


def generate(scheme, N, seed, truth=None):
    """``scheme`` is 1, 2 or 3 (1 and 2 share a generator)."""
    if int(scheme) in (1, 2):
        return gen_scheme12(SchemeConfig("s1s2", N, seed, truth))
    if int(scheme) == 3:
        return gen_scheme3(SchemeConfig("s3", N, seed, truth))
    raise ValueError(f"unknown scheme {scheme!r}")
