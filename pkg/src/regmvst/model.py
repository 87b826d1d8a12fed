"""Regression model with matrix-variate skew-t errors and DEC row correlation.

Subject i contributes Y_i = X_i beta + E_i with
E_i ~ MVST(0, 1 a_row, DEC(t_i; rho1, rho2), Psi, nu).
"""

import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _backend
from .dec import DecParams, TiedTimesWarning, dec_cholesky, has_ties
from .mvst import DecompositionError
from .special import DomainError


class EstimationError(RuntimeError):
    """The fitting procedure cannot continue (singular system, non-finite update, ...)."""


def fsum_rows(values):
    """Exactly rounded sum over the leading axis, elementwise over the rest."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return math.fsum(arr)
    flat = arr.reshape(arr.shape[0], -1)
    return np.array([math.fsum(col) for col in flat.T]).reshape(arr.shape[1:])


@dataclass(frozen=True)
class Theta:
    beta: np.ndarray
    a_row: np.ndarray
    psi: np.ndarray
    nu: float
    dec: DecParams

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float, ndmin=2)
        a_row = np.array(self.a_row, dtype=float).ravel()
        psi = np.array(self.psi, dtype=float, ndmin=2)
        p = beta.shape[1]
        if a_row.shape != (p,) or psi.shape != (p, p):
            raise ValueError(f"inconsistent Theta shapes: beta {beta.shape}, a_row {a_row.shape}, "
                             f"psi {psi.shape}")
        if not np.allclose(psi, psi.T, rtol=0, atol=1e-12 * max(1.0, np.abs(psi).max())):
            raise DomainError("psi must be symmetric")
        nu = float(self.nu)
        if not (nu > 0 and math.isfinite(nu)):
            raise DomainError(f"nu must be positive, got {nu}")
        for arr in (beta, a_row, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "a_row", a_row)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "nu", nu)
        if not isinstance(self.dec, DecParams):
            object.__setattr__(self, "dec", DecParams(*self.dec))

    @property
    def q(self):
        return self.beta.shape[0]

    @property
    def p(self):
        return self.beta.shape[1]

    def with_(self, **changes):
        return replace(self, **changes)

    def flatten(self):
        """beta row-major, a_row, psi lower triangle (row by row), nu, rho1, rho2."""
        rows, cols = np.tril_indices(self.p)
        return np.concatenate([self.beta.ravel(), self.a_row, self.psi[rows, cols],
                               [self.nu, self.dec.rho1, self.dec.rho2]])

    @staticmethod
    def names(q, p):
        out = [f"beta_{i + 1}{j + 1}" for i in range(q) for j in range(p)]
        out += [f"a_{j + 1}" for j in range(p)]
        rows, cols = np.tril_indices(p)
        out += [f"psi_{r + 1}{c + 1}" for r, c in zip(rows, cols)]
        return out + ["nu", "rho1", "rho2"]

    @classmethod
    def unflatten(cls, vec, q, p):
        vec = np.asarray(vec, dtype=float)
        k = q * p
        beta = vec[:k].reshape(q, p)
        a_row = vec[k:k + p]
        m = p * (p + 1) // 2
        psi = np.zeros((p, p))
        rows, cols = np.tril_indices(p)
        psi[rows, cols] = vec[k + p:k + p + m]
        psi[cols, rows] = vec[k + p:k + p + m]
        nu, r1, r2 = vec[k + p + m:k + p + m + 3]
        return cls(beta, a_row, psi, nu, DecParams(r1, r2))

    def to_dict(self):
        rows, cols = np.tril_indices(self.p)
        return {
            "q": self.q,
            "p": self.p,
            "beta": [float(v) for v in self.beta.ravel()],
            "a_row": [float(v) for v in self.a_row],
            "psi_lower": [float(v) for v in self.psi[rows, cols]],
            "nu": self.nu,
            "rho1": self.dec.rho1,
            "rho2": self.dec.rho2,
        }

    @classmethod
    def from_dict(cls, d):
        q, p = int(d["q"]), int(d["p"])
        vec = list(d["beta"]) + list(d["a_row"]) + list(d["psi_lower"]) + [d["nu"], d["rho1"], d["rho2"]]
        if len(vec) != q * p + p + p * (p + 1) // 2 + 3:
            raise ValueError("parameter JSON has inconsistent lengths")
        return cls.unflatten(vec, q, p)

    def psi_factor(self):
        try:
            return cho_factor(self.psi, lower=True)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError("Psi is not positive definite") from exc


@dataclass(frozen=True)
class Subject:
    y: np.ndarray
    x: np.ndarray
    t: np.ndarray
    id: object = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float, ndmin=2)
        x = np.array(self.x, dtype=float, ndmin=2)
        t = np.array(self.t, dtype=float).ravel()
        if not (y.shape[0] == x.shape[0] == t.size) or t.size < 1:
            raise ValueError(f"subject {self.id!r}: row counts of y {y.shape}, x {x.shape}, "
                             f"t {t.shape} disagree")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise DomainError(f"subject {self.id!r}: non-finite values")
        for arr in (y, x, t):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)

    @property
    def n(self):
        return self.t.size


@dataclass
class Gram:
    """Per-subject Sigma_i^{-1} cross products of (Y_i, X_i, 1) at one DEC setting."""
    yy: np.ndarray
    xy: np.ndarray
    xx: np.ndarray
    oy: np.ndarray
    ox: np.ndarray
    oo: np.ndarray
    logdet: np.ndarray
    status: np.ndarray


class PackedSubjects:
    """Subjects stacked row-wise for the compiled kernels, with a DEC factor cache.

    The cache is keyed by (rho1, rho2), so a grid search revisits factorizations
    instead of recomputing them every iteration.
    """

    CACHE_LIMIT = 256

    def __init__(self, subjects, p, q, backend=None):
        self.ids = [s.id for s in subjects]
        self.p = p
        self.q = q
        self.nrows = np.array([s.n for s in subjects], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.nrows)]).astype(np.int64)
        self.times = np.ascontiguousarray(np.concatenate([s.t for s in subjects]))
        self.Y = np.ascontiguousarray(np.vstack([s.y for s in subjects]).reshape(-1, p))
        self.X = np.ascontiguousarray(np.vstack([s.x for s in subjects]).reshape(-1, q))
        self.total_rows = int(self.nrows.sum())
        self.backend = backend
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self):
        return self.nrows.size

    def grams(self, rho1, rho2):
        key = (float(rho1), float(rho2))
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        k = _backend.kernels(self.backend)
        g = Gram(*k.build_grams(self.times, self.Y, self.X, self.offsets, key[0], key[1]))
        with self._lock:
            self._cache[key] = g
            while len(self._cache) > self.CACHE_LIMIT:
                self._cache.popitem(last=False)
        return g

    def require_factorized(self, gram, dec):
        bad = np.flatnonzero(gram.status == 2)
        if bad.size:
            raise DecompositionError(
                f"DEC matrix of subject {self.ids[bad[0]]!r} at ({dec.rho1}, {dec.rho2}) is not "
                "positive definite even after jitter")

    def loglik_terms(self, theta, rho1=None, rho2=None, strict=True):
        """Per-subject log densities; unfactorizable subjects give -inf unless strict."""
        dec = DecParams(theta.dec.rho1 if rho1 is None else rho1,
                        theta.dec.rho2 if rho2 is None else rho2)
        g = self.grams(dec.rho1, dec.rho2)
        if strict:
            self.require_factorized(g, dec)
        psi_inv, logdet_psi = psi_inverse(theta)
        out = _backend.kernels(self.backend).loglik_terms(
            g.yy, g.xy, g.xx, g.oy, g.ox, g.oo, g.logdet, self.nrows,
            np.ascontiguousarray(theta.beta), np.ascontiguousarray(theta.a_row),
            psi_inv, logdet_psi, theta.nu)
        out[g.status == 2] = -np.inf
        return out


def psi_inverse(theta):
    c = theta.psi_factor()
    inv = cho_solve(c, np.eye(theta.p))
    inv = np.ascontiguousarray(0.5 * (inv + inv.T))
    return inv, 2.0 * float(np.sum(np.log(np.diag(c[0]))))


class Dataset:
    def __init__(self, subjects, p=None, q=None):
        subjects = list(subjects)
        if not subjects:
            raise ValueError("dataset must contain at least one subject")
        p = subjects[0].y.shape[1] if p is None else p
        q = subjects[0].x.shape[1] if q is None else q
        for s in subjects:
            if s.y.shape[1] != p or s.x.shape[1] != q:
                raise ValueError(f"subject {s.id!r} has {s.y.shape[1]} responses and "
                                 f"{s.x.shape[1]} covariates, expected {p} and {q}")
        self.subjects = subjects
        self.p = p
        self.q = q
        if any(has_ties(s.t) for s in subjects):
            warnings.warn("some subjects have tied observation times; ties are treated as "
                          "1e-6 apart", TiedTimesWarning, stacklevel=2)

    def __len__(self):
        return len(self.subjects)

    @property
    def total_rows(self):
        return sum(s.n for s in self.subjects)

    @cached_property
    def packed(self):
        return PackedSubjects(self.subjects, self.p, self.q)

    def subset(self, indices):
        return Dataset([self.subjects[i] for i in indices], self.p, self.q)

    def partition(self, k):
        """Split into k contiguous, near-equal blocks of subjects."""
        bounds = np.linspace(0, len(self), k + 1).round().astype(int)
        return [list(range(bounds[j], bounds[j + 1])) for j in range(k)]


def observed_loglik(data, theta):
    return fsum_rows(data.packed.loglik_terms(theta))


def _subject_residual(s, theta, w):
    L, _ = dec_cholesky(s.t, theta.dec)
    Lp = np.linalg.cholesky(theta.psi)
    R = s.y - s.x @ theta.beta - w * np.outer(np.ones(s.n), theta.a_row)
    left = np.linalg.solve(L, R)
    return np.linalg.solve(Lp, left.T).T / math.sqrt(w)


def standardized_residuals(data, theta):
    """L_i^{-1} (Y_i - X_i beta - w_i 1 a_row) L_Psi^{-T} / sqrt(w_i), w_i = E(W_i | Y_i)."""
    from .estep import conditional_moments

    a, _, _ = conditional_moments(data.packed, theta)
    return [_subject_residual(s, theta, float(w)) for s, w in zip(data.subjects, a)]


def residual_table(data, residuals):
    """Long-format rows (subject_id, row, time, column, residual)."""
    rows = []
    for s, r in zip(data.subjects, residuals):
        for j in range(s.n):
            for c in range(r.shape[1]):
                rows.append((s.id, j + 1, float(s.t[j]), c + 1, float(r[j, c])))
    return rows

