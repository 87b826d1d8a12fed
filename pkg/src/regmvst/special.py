"""Scalar special functions: log-scaled Bessel K of real order, its order
derivative, digamma and trigamma.

All Bessel work is done in log space; callers never see unscaled K values.
"""

import math

import numpy as np

from ._backend import kernels

MIN_ARGUMENT = 1e-8
MAX_ORDER = 1e6


class DomainError(ValueError):
    """Raised when a special function is evaluated outside its supported domain."""


def _check(order, x):
    if not (math.isfinite(order) and math.isfinite(x)):
        raise DomainError(f"non-finite input (order={order}, x={x})")
    if x < MIN_ARGUMENT:
        raise DomainError(f"argument must be >= {MIN_ARGUMENT}, got {x}")
    if abs(order) > MAX_ORDER:
        raise DomainError(f"|order| must be <= {MAX_ORDER:g}, got {order}")


def log_bessel_k(order, x):
    """Natural log of K_order(x); even in ``order``."""
    order, x = float(order), float(x)
    _check(order, x)
    return float(kernels().log_k(abs(order), x))


def bessel_k_ratio(order, x):
    """K_{order+1}(x) / K_order(x), formed from log values."""
    order, x = float(order), float(x)
    _check(order, x)
    _check(order + 1.0, x)
    k = kernels()
    return math.exp(k.log_k(order + 1.0, x) - k.log_k(order, x))


def dlog_bessel_k_dorder(order, x):
    """d/d(order) of ln K_order(x), by a once-Richardson-extrapolated central difference."""
    order, x = float(order), float(x)
    _check(order, x)
    return float(kernels().dlog_k_dorder(order, x))


def digamma(x):
    x = float(x)
    if not (x > 0.0 and math.isfinite(x)):
        raise DomainError(f"digamma needs x > 0, got {x}")
    return float(kernels().digamma(x))


def trigamma(x):
    x = float(x)
    if not (x > 0.0 and math.isfinite(x)):
        raise DomainError(f"trigamma needs x > 0, got {x}")
    return float(kernels().trigamma(x))


def log_bessel_k_array(orders, xs):
    """Vectorised ``log_bessel_k``; raises if any element is out of domain."""
    xs = np.ascontiguousarray(xs, dtype=float)
    orders = np.ascontiguousarray(np.broadcast_to(orders, xs.shape), dtype=float)
    if xs.size and (not np.all(np.isfinite(xs)) or xs.min() < MIN_ARGUMENT):
        raise DomainError("Bessel argument outside the supported range")
    return kernels().log_k_array(orders.ravel(), xs.ravel()).reshape(xs.shape)
