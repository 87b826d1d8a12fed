"""Damped exponential correlation: Sigma_jk = rho1 ** (|t_j - t_k| ** rho2)."""

import warnings
from dataclasses import dataclass

import numpy as np

from .special import DomainError

TIE_GAP = 1e-6
JITTER = 1e-10
_GRID = (1e-5, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0 - 1e-5)


class TiedTimesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DecParams:
    rho1: float
    rho2: float

    def __post_init__(self):
        r1, r2 = float(self.rho1), float(self.rho2)
        if not (0.0 <= r1 < 1.0 and 0.0 <= r2 < 1.0):
            raise DomainError(f"DEC parameters must lie in [0, 1), got ({r1}, {r2})")
        object.__setattr__(self, "rho1", r1)
        object.__setattr__(self, "rho2", r2)


def dec_grid():
    """The shared 11-point search grid for rho1 and rho2."""
    return np.array(_GRID)


def has_ties(times):
    t = np.sort(np.asarray(times, dtype=float))
    return bool(np.any(np.diff(t) == 0.0))


def dec_correlation(times, params, warn=True):
    t = np.asarray(times, dtype=float).ravel()
    if t.size < 1:
        raise DomainError("time vector must be non-empty")
    if not np.all(np.isfinite(t)):
        raise DomainError("observation times must be finite")
    n = t.size
    out = np.eye(n)
    tied = False
    for j in range(1, n):
        for k in range(j):
            gap = abs(t[j] - t[k])
            if gap == 0.0:
                gap = TIE_GAP
                tied = True
            v = params.rho1 ** (gap ** params.rho2)
            out[j, k] = v
            out[k, j] = v
    if tied and warn:
        warnings.warn(f"tied observation times treated as {TIE_GAP:g} apart", TiedTimesWarning,
                      stacklevel=2)
    return out


def dec_cholesky(times, params):
    """Cholesky factor of the DEC matrix with one jitter retry; returns (L, jittered)."""
    S = dec_correlation(times, params)
    try:
        return np.linalg.cholesky(S), False
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(S + JITTER * np.eye(S.shape[0])), True
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"DEC matrix at ({params.rho1}, {params.rho2}) is not positive definite "
            "even after jitter") from exc

