"""Conditional expectations of the latent scale and the sufficient statistics
consumed by the conditional-maximization steps.

Given Y_i, W_i ~ GIG(rho_i, delta_i + nu, -(nu + n_i p) / 2), and
a_i = E(W_i|Y_i), b_i = E(1/W_i|Y_i), c_i = E(log W_i|Y_i).
Everything is computed from the cached Sigma_i^{-1} cross products, so a new
beta or a_row costs only small dense algebra per subject.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from ._kernels_numpy import _residual_forms
from .dec import dec_grid
from .model import PackedSubjects, fsum_rows, psi_inverse


@dataclass(frozen=True)
class SubjectStats:
    a: float
    b: float
    c: float
    s_beta1: np.ndarray
    s_beta2: np.ndarray
    s_nu: float
    s_a1: np.ndarray
    s_a2: float
    s_psi: np.ndarray
    n_rows: int


@dataclass(frozen=True)
class GridLoglik:
    rho1_values: np.ndarray
    rho2_values: np.ndarray


@dataclass(frozen=True)
class PartitionStats:
    """Sums of the per-subject statistics over one worker's partition."""
    s_beta1: np.ndarray
    s_beta2: np.ndarray
    s_nu: float
    s_a1: np.ndarray
    s_a2: float
    s_psi: np.ndarray
    grid: GridLoglik
    subject_count: int
    total_rows: int
    stamp: int


@dataclass
class EStepState:
    """Per-subject E-step quantities for one block at one parameter value."""
    packed: PackedSubjects
    gram: object
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def conditional_moments(packed, theta):
    a, b, c, _ = _moments_and_gram(packed, theta)
    return a, b, c


def _moments_and_gram(packed, theta):
    g = packed.grams(theta.dec.rho1, theta.dec.rho2)
    packed.require_factorized(g, theta.dec)
    psi_inv, _ = psi_inverse(theta)
    a, b, c, _, _ = _backend.kernels(packed.backend).estep_terms(
        g.yy, g.xy, g.xx, g.oy, g.ox, g.oo, packed.nrows,
        np.ascontiguousarray(theta.beta), np.ascontiguousarray(theta.a_row), psi_inv, theta.nu)
    return a, b, c, g


def block_estep(packed, theta):
    a, b, c, g = _moments_and_gram(packed, theta)
    return EStepState(packed, g, a, b, c)


def beta_nu_terms(state, theta):
    """Per-subject s_beta1 (N,q,q), s_beta2 (N,q,p), s_nu (N,)."""
    g = state.gram
    s_beta1 = state.b[:, None, None] * g.xx
    s_beta2 = state.b[:, None, None] * g.xy - g.ox[:, :, None] * theta.a_row[None, None, :]
    return s_beta1, s_beta2, state.b + state.c


def a_terms(state, beta):
    """Per-subject s_a1 (N,p) and s_a2 (N,) with the supplied beta."""
    g = state.gram
    return g.oy - g.ox @ beta, state.a * g.oo


def psi_terms(state, beta, a_row):
    """Per-subject s_psi (N,p,p) with the supplied beta and a_row."""
    g = state.gram
    grr, g1r = _residual_forms(g.yy, g.xy, g.xx, g.oy, g.ox, beta)
    cross = a_row[None, :, None] * g1r[:, None, :]
    out = (state.b[:, None, None] * grr - cross - np.transpose(cross, (0, 2, 1))
           + (state.a * g.oo)[:, None, None] * np.outer(a_row, a_row)[None, :, :])
    return 0.5 * (out + np.transpose(out, (0, 2, 1)))


def grid_values(packed, theta, axis, fixed):
    """Partition log-likelihood sums over the grid for one DEC coordinate.

    axis=1 varies rho1 with rho2=fixed; axis=2 varies rho2 with rho1=fixed.
    Grid points whose factorization fails even with jitter get -inf.
    """
    out = np.empty(11)
    for j, value in enumerate(dec_grid()):
        r1, r2 = (value, fixed) if axis == 1 else (fixed, value)
        terms = packed.loglik_terms(theta, rho1=r1, rho2=r2, strict=False)
        out[j] = -np.inf if np.isneginf(terms).any() else fsum_rows(terms)
    return out


def grid_loglik_partition(subjects, theta, rho1_for_second_axis=None):
    """Grid log-likelihood sums for a list of subjects (or a packed block).

    The second axis holds rho1 at ``rho1_for_second_axis`` when given (the
    synchronous engine passes the freshly selected rho1), else at theta's rho1.
    """
    packed = subjects if isinstance(subjects, PackedSubjects) else _pack(subjects)
    r1 = theta.dec.rho1 if rho1_for_second_axis is None else rho1_for_second_axis
    return GridLoglik(grid_values(packed, theta, 1, theta.dec.rho2),
                      grid_values(packed, theta, 2, r1))


def full_partition_stats(packed, theta, stamp):
    """Everything a worker sends in one asynchronous round, evaluated at theta."""
    st = block_estep(packed, theta)
    s_beta1, s_beta2, s_nu = beta_nu_terms(st, theta)
    s_a1, s_a2 = a_terms(st, theta.beta)
    s_psi = psi_terms(st, theta.beta, theta.a_row)
    return PartitionStats(
        s_beta1=fsum_rows(s_beta1), s_beta2=fsum_rows(s_beta2), s_nu=fsum_rows(s_nu),
        s_a1=fsum_rows(s_a1), s_a2=fsum_rows(s_a2), s_psi=fsum_rows(s_psi),
        grid=grid_loglik_partition(packed, theta),
        subject_count=len(packed), total_rows=packed.total_rows, stamp=stamp)


def _pack(subjects):
    subjects = list(subjects)
    return PackedSubjects(subjects, subjects[0].y.shape[1], subjects[0].x.shape[1])


def estep_subject(subject, theta):
    st = block_estep(_pack([subject]), theta)
    s_beta1, s_beta2, s_nu = beta_nu_terms(st, theta)
    s_a1, s_a2 = a_terms(st, theta.beta)
    s_psi = psi_terms(st, theta.beta, theta.a_row)
    return SubjectStats(a=float(st.a[0]), b=float(st.b[0]), c=float(st.c[0]),
                        s_beta1=s_beta1[0], s_beta2=s_beta2[0], s_nu=float(s_nu[0]),
                        s_a1=s_a1[0], s_a2=float(s_a2[0]), s_psi=s_psi[0], n_rows=subject.n)


def estep_refresh_A_stats(subject, theta_partial, stats):
    """(s_a1, s_a2) with theta_partial's beta and the E-step's a from ``stats``."""
    g = _pack([subject]).grams(theta_partial.dec.rho1, theta_partial.dec.rho2)
    s_a1 = g.oy[0] - g.ox[0] @ theta_partial.beta
    return s_a1, stats.a * float(g.oo[0])


def estep_refresh_Psi_stats(subject, theta_partial, stats):
    """s_psi with theta_partial's beta and a_row and the E-step's (a, b) from ``stats``."""
    packed = _pack([subject])
    g = packed.grams(theta_partial.dec.rho1, theta_partial.dec.rho2)
    st = EStepState(packed, g, np.array([stats.a]), np.array([stats.b]), np.array([stats.c]))
    return psi_terms(st, theta_partial.beta, theta_partial.a_row)[0]
