"""Subject-level nonparametric bootstrap intervals for any fitting engine."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import FitConfig, fit, fit_with_restarts
from .model import Dataset, EstimationError, Theta
from .seeding import BOOTSTRAP, derive_seed


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 100
    level: float = 0.90
    fit: FitConfig = field(default_factory=FitConfig)
    seed: int = 0
    restarts: int = 1
    warm_start: bool = True
    workers: int = 1

    def __post_init__(self):
        if int(self.B) < 2:
            raise ValueError("B must be at least 2")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if int(self.restarts) < 1 or int(self.workers) < 1:
            raise ValueError("restarts and workers must be at least 1")


@dataclass
class BootstrapResult:
    names: list
    point: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    replicates: np.ndarray
    dropped: int
    failures: list
    level: float
    point_fit: object = None

    def rows(self):
        return [(n, float(p), float(a), float(b))
                for n, p, a, b in zip(self.names, self.point, self.lo, self.hi)]

    def to_dict(self):
        return {
            "level": self.level,
            "quantile_rule": "linear interpolation between order statistics (inclusive)",
            "replicates_used": int(self.replicates.shape[0]),
            "replicates_dropped": self.dropped,
            "failures": self.failures,
            "intervals": [{"param": n, "point": p, "lo": a, "hi": b} for n, p, a, b in self.rows()],
        }


def resample_indices(N, seed, b):
    rng = np.random.default_rng(derive_seed(seed, BOOTSTRAP, b))
    return rng.integers(0, N, size=N)


def _replicate(data, cfg, b, start):
    idx = resample_indices(len(data), cfg.seed, b)
    boot = Dataset([data.subjects[i] for i in idx], data.p, data.q)
    run_cfg = replace(cfg.fit, seed=derive_seed(cfg.seed, BOOTSTRAP, b, 1),
                      init=start if start is not None else cfg.fit.init)
    try:
        res = fit(boot, run_cfg)
    except (EstimationError, np.linalg.LinAlgError, ValueError) as exc:
        return b, None, f"replicate {b}: {exc}"
    if not res.converged:
        return b, None, f"replicate {b}: no convergence in {res.iterations} iterations"
    return b, res.theta_hat.flatten(), None


def bootstrap_ci(data, cfg, point_fit=None):
    """Percentile intervals from B subject resamples.

    Quantiles use linear interpolation between order statistics
    (numpy's default 'linear' rule, i.e. Hyndman-Fan type 7). With
    ``warm_start`` each replicate starts at the full-data estimate.
    """
    if point_fit is None:
        point_fit = fit_with_restarts(data, cfg.fit, cfg.restarts)
    theta_hat = point_fit.theta_hat
    start = theta_hat if cfg.warm_start else None
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda b: _replicate(data, cfg, b, start), range(cfg.B)))
    else:
        results = [_replicate(data, cfg, b, start) for b in range(cfg.B)]
    results.sort(key=lambda r: r[0])
    kept = [r[1] for r in results if r[1] is not None]
    failures = [r[2] for r in results if r[2] is not None]
    if len(failures) > cfg.B / 2:
        raise EstimationError(f"{len(failures)} of {cfg.B} bootstrap replicates failed; first: "
                              f"{failures[0]}")
    reps = np.array(kept)
    alpha = 1.0 - cfg.level
    lo = np.quantile(reps, alpha / 2.0, axis=0, method="linear")
    hi = np.quantile(reps, 1.0 - alpha / 2.0, axis=0, method="linear")
    return BootstrapResult(names=Theta.names(data.q, data.p), point=theta_hat.flatten(), lo=lo,
                           hi=hi, replicates=reps, dropped=len(failures), failures=failures,
                           level=cfg.level, point_fit=point_fit)


def coverage_count(results, index, truth_value):
    """How many of the results' intervals for coordinate ``index`` contain the truth."""
    return sum(1 for r in results if r.lo[index] <= truth_value <= r.hi[index])

