"""Conditional-maximization updates on aggregated sufficient statistics."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dec import DecParams, dec_grid
from .model import EstimationError
from .special import digamma

NU_LOW = 0.05
NU_HIGH = 500.0


@dataclass(frozen=True)
class AggregateStats:
    S_beta1: np.ndarray
    S_beta2: np.ndarray
    S_nu: float
    S_a1: np.ndarray
    S_a2: float
    S_psi: np.ndarray
    total_rows: int
    N: int


def update_beta(agg):
    try:
        factor = cho_factor(agg.S_beta1, lower=True)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(
            "the weighted covariate Gram matrix is singular; more subjects or rescaled "
            "covariates are needed") from exc
    return cho_solve(factor, agg.S_beta2)


def nu_score(nu, target):
    """ln(nu/2) + 1 - digamma(nu/2) - target; strictly decreasing in nu."""
    return math.log(0.5 * nu) + 1.0 - digamma(0.5 * nu) - target


def update_nu(agg):
    """Return (nu, clamped) solving nu_score(nu, S_nu / N) = 0 on [NU_LOW, NU_HIGH]."""
    target = agg.S_nu / agg.N
    lo, hi = NU_LOW, NU_HIGH
    g_lo, g_hi = nu_score(lo, target), nu_score(hi, target)
    if g_lo <= 0.0:
        return lo, g_lo < 0.0
    if g_hi >= 0.0:
        return hi, g_hi > 0.0
    while True:
        mid = 0.5 * (lo + hi)
        g = nu_score(mid, target)
        if abs(g) < 1e-10 or hi - lo < 1e-9:
            return mid, False
        if g > 0.0:
            lo = mid
        else:
            hi = mid


def update_A(agg):
    if not agg.S_a2 > 0:
        raise EstimationError(f"internal invariant violated: S_a2 = {agg.S_a2} <= 0")
    return np.asarray(agg.S_a1, dtype=float) / agg.S_a2


def update_Psi(agg):
    """Return (psi, projected); projection floors eigenvalues at 1e-8 of the largest."""
    if agg.total_rows <= 0:
        raise EstimationError("no rows to estimate Psi from")
    psi = np.asarray(agg.S_psi, dtype=float) / agg.total_rows
    psi = 0.5 * (psi + psi.T)
    try:
        np.linalg.cholesky(psi)
        return psi, False
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(psi)
    top = vals.max()
    if not top > 0:
        raise EstimationError("Psi update has no positive eigenvalue")
    vals = np.maximum(vals, 1e-8 * top)
    psi = (vecs * vals) @ vecs.T
    return 0.5 * (psi + psi.T), True


def argmax_grid(values):
    values = np.asarray(values, dtype=float)
    if values.shape != (11,):
        raise ValueError("grid vector must have 11 entries")
    if np.all(np.isneginf(values)):
        raise EstimationError("every grid point has zero likelihood")
    # np.argmax returns the first maximum, which is the documented tie-break
    return float(dec_grid()[int(np.argmax(values))])


def select_dec(grid_sums):
    return DecParams(argmax_grid(grid_sums.rho1_values), argmax_grid(grid_sums.rho2_values))
