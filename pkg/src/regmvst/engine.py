"""Fitting drivers: serial ECME, synchronous parallel ECME, asynchronous ECME.

The parallel drivers run k logical workers, each owning a contiguous block of
subjects. Messages between the manager and the workers are immutable values
(a Theta down, summed statistics up). ``comm_rounds`` counts manager-worker
exchanges: a broadcast plus the replies it triggers is one exchange.
"""

import math
import queue
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cm
from .dec import DecParams, dec_grid
from .estep import (a_terms, beta_nu_terms, block_estep, full_partition_stats, grid_values,
                    psi_terms)
from .model import EstimationError, PackedSubjects, Theta, fsum_rows, observed_loglik
from .seeding import DELAY, INIT, RESTART, SYNC_COIN, derive_seed, rng_for

ENGINES = ("ecme", "pecme", "adecme")
STEP_KEYS = ("e_step", "dec", "psi", "a", "beta", "nu")
WATCHDOG_LIMIT = 100

# Relative per-subject work of each worker task; used only to scale injected delays.
WORK_UNITS = {"estep": 1.0, "a": 0.25, "psi": 0.25, "grid": 11.0}
FULL_TASK_UNITS = sum(WORK_UNITS.values()) + WORK_UNITS["grid"]


@dataclass(frozen=True)
class DelayModel:
    """Artificial per-task worker latency.

    A task is charged ``per_subject_ms * subjects * work_units`` milliseconds.
    ``kind='slow'`` multiplies that by ``slow_factor`` on worker ``slow_worker``;
    ``kind='uniform'`` adds a Uniform(low_ms, high_ms) draw per task.

    With ``pacing='floor'`` the charge is the task's minimum duration, so real
    compute counts toward it (each worker behaves like its own machine even when
    threads share one core). ``pacing='additive'`` sleeps the full charge after
    the compute.
    """
    kind: str = "none"
    per_subject_ms: float = 0.0
    low_ms: float = 0.0
    high_ms: float = 0.0
    slow_worker: int = 0
    slow_factor: float = 2.0
    pacing: str = "floor"

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "slow"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.pacing not in ("floor", "additive"):
            raise ValueError(f"unknown pacing {self.pacing!r}")
        if self.per_subject_ms < 0 or self.low_ms < 0 or self.high_ms < self.low_ms:
            raise ValueError("delays must be non-negative with low_ms <= high_ms")

    @property
    def active(self):
        return self.per_subject_ms > 0 or (self.kind == "uniform" and self.high_ms > 0)

    def seconds(self, worker, subjects, units, rng):
        ms = self.per_subject_ms * subjects * units
        if self.kind == "slow" and worker == self.slow_worker:
            ms *= self.slow_factor
        elif self.kind == "uniform":
            ms += rng.uniform(self.low_ms, self.high_ms)
        return ms / 1000.0

    def hold(self, started, worker, subjects, units, rng):
        """Sleep so the task started at ``started`` (perf_counter) meets its charge."""
        wait = self.seconds(worker, subjects, units, rng)
        if self.pacing == "floor":
            wait -= time.perf_counter() - started
        if wait > 0:
            time.sleep(wait)


@dataclass(frozen=True)
class FitConfig:
    engine: str = "ecme"
    epsilon: float = 1e-7
    max_iter: int = 1000
    workers_k: int = 1
    gamma: float = 1.0
    zeta: float = 0.05
    seed: int = 0
    init: object = "default"
    trace_loglik: bool = False
    delay: DelayModel = field(default_factory=DelayModel)
    watchdog: int = WATCHDOG_LIMIT
    schedule: str = "threads"

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        if int(self.workers_k) < 1:
            raise ValueError("workers_k must be at least 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.zeta < 1.0:
            raise ValueError("zeta must lie in [0, 1)")
        if not (self.init in ("default", "random") or isinstance(self.init, Theta)):
            raise ValueError("init must be 'default', 'random' or a Theta")
        if self.schedule not in ("threads", "virtual"):
            raise ValueError("schedule must be 'threads' or 'virtual'")

    @property
    def wait_count(self):
        return max(1, math.ceil(self.gamma * self.workers_k - 1e-12))


@dataclass
class FitResult:
    theta_hat: Theta
    iterations: int
    converged: bool
    comm_rounds: int
    loglik_trace: list
    step_timings: dict
    flags: list
    engine: str
    theta_init: Theta
    loglik_init: float = None
    theta_path: list = field(default_factory=list)
    iteration_timings: list = field(default_factory=list)
    stale_histogram: dict = field(default_factory=dict)
    max_lag: int = 0
    total_time: float = 0.0
    workers_k: int = 1

    def to_dict(self):
        return {
            "engine": self.engine,
            "theta_hat": self.theta_hat.to_dict(),
            "theta_init": self.theta_init.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "comm_rounds": self.comm_rounds,
            "workers_k": self.workers_k,
            "loglik_init": self.loglik_init,
            "loglik_trace": list(self.loglik_trace),
            "step_timings": dict(self.step_timings),
            "total_time": self.total_time,
            "flags": list(self.flags),
            "stale_histogram": {str(k): v for k, v in sorted(self.stale_histogram.items())},
            "max_lag": self.max_lag,
        }


def check_convergence(theta_prev, theta_next, epsilon):
    a, b = theta_prev.flatten(), theta_next.flatten()
    if a.shape != b.shape:
        raise EstimationError(f"parameter vectors differ in length: {a.size} vs {b.size}")
    return bool(np.max(np.abs(a - b)) < epsilon)


def _pooled_ols(data):
    X = data.packed.X
    Y = data.packed.Y
    G = X.T @ X
    ridge = False
    try:
        L = np.linalg.cholesky(G)
        if np.linalg.cond(G) > 1e12:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridge = True
        G = G + 1e-6 * np.eye(G.shape[0])
        L = np.linalg.cholesky(G)
    beta = np.linalg.solve(L.T, np.linalg.solve(L, X.T @ Y))
    return beta, Y - X @ beta, ridge


def default_init(data, seed, mode="default", flags=None):
    """Starting value from pooled least squares; ``mode='random'`` perturbs it."""
    rng = rng_for(seed, INIT)
    beta, resid, ridge = _pooled_ols(data)
    if ridge and flags is not None:
        flags.append("ridge_init")
    signs = rng.choice([-1.0, 1.0], size=data.p)
    psi = resid.T @ resid / resid.shape[0]
    psi = 0.5 * (psi + psi.T)
    top = max(float(np.max(np.diag(psi))), 1e-12)
    vals, vecs = np.linalg.eigh(psi)
    if vals.min() < 1e-8 * top:
        psi = (vecs * np.maximum(vals, 1e-8 * top)) @ vecs.T
        psi = 0.5 * (psi + psi.T)
    nu = 10.0
    dec = DecParams(0.5, 0.5)
    if mode == "random":
        beta = beta + rng.normal(0.0, 0.1, size=beta.shape)
        nu = float(rng.uniform(3.0, 30.0))
        # the DEC start decides which grid fixed point is reached, so restarts vary it too
        dec = DecParams(*rng.choice(dec_grid()[1:-1], size=2))
    elif mode != "default":
        raise ValueError(f"unknown init mode {mode!r}")
    return Theta(beta, 0.01 * signs, psi, nu, dec)


class _Instruments:
    def __init__(self, engine, cfg, data, theta0):
        self.engine = engine
        self.cfg = cfg
        self.data = data
        self.flags = Counter()
        self.first_seen = {}
        self.comm_rounds = 0
        self.timings = {k: 0.0 for k in STEP_KEYS}
        self.rows = []
        self.path = [theta0.flatten()]
        self.trace = []
        self.loglik_init = observed_loglik(data, theta0) if cfg.trace_loglik else None
        self.theta0 = theta0
        self.start = time.perf_counter()
        self.iter_start = self.start
        self.current = {k: 0.0 for k in STEP_KEYS}

    def flag(self, name, iteration):
        self.flags[name] += 1
        self.first_seen.setdefault(name, iteration)

    def begin_iteration(self):
        self.iter_start = time.perf_counter()
        self.current = {k: 0.0 for k in STEP_KEYS}

    def add(self, key, seconds):
        self.current[key] += seconds

    def end_iteration(self, t, theta):
        if not np.all(np.isfinite(theta.flatten())):
            raise EstimationError(f"non-finite parameter update at iteration {t + 1}")
        row = dict(self.current)
        row["iteration"] = t + 1
        row["total"] = time.perf_counter() - self.iter_start
        self.rows.append(row)
        for k in STEP_KEYS:
            self.timings[k] += self.current[k]
        self.path.append(theta.flatten())
        if self.cfg.trace_loglik:
            self.trace.append(observed_loglik(self.data, theta))

    def result(self, theta, iterations, converged, **extra):
        total = time.perf_counter() - self.start
        timings = dict(self.timings)
        timings["TT"] = total
        timings["TNI"] = iterations
        flags = [{"flag": k, "count": v, "first_iteration": self.first_seen[k]}
                 for k, v in self.flags.items()]
        return FitResult(theta_hat=theta, iterations=iterations, converged=converged,
                         comm_rounds=self.comm_rounds, loglik_trace=self.trace,
                         step_timings=timings, flags=flags, engine=self.engine,
                         theta_init=self.theta0, loglik_init=self.loglik_init,
                         theta_path=self.path, iteration_timings=self.rows, total_time=total,
                         workers_k=self.cfg.workers_k if self.engine != "ecme" else 1, **extra)


def _initial_theta(data, cfg, flags):
    if isinstance(cfg.init, Theta):
        if cfg.init.q != data.q or cfg.init.p != data.p:
            raise ValueError("explicit initial Theta does not match the data dimensions")
        return cfg.init
    return default_init(data, cfg.seed, cfg.init, flags)


def _aggregate(parts, N, total_rows):
    """Combine partition sums in worker order with compensated summation."""
    return cm.AggregateStats(
        S_beta1=fsum_rows(np.stack([p["s_beta1"] for p in parts])),
        S_beta2=fsum_rows(np.stack([p["s_beta2"] for p in parts])),
        S_nu=fsum_rows([p["s_nu"] for p in parts]),
        S_a1=fsum_rows(np.stack([p["s_a1"] for p in parts])) if "s_a1" in parts[0] else None,
        S_a2=fsum_rows([p["s_a2"] for p in parts]) if "s_a2" in parts[0] else None,
        S_psi=fsum_rows(np.stack([p["s_psi"] for p in parts])) if "s_psi" in parts[0] else None,
        total_rows=total_rows, N=N)


def _sum_grids(values):
    arr = np.stack(values)
    out = np.empty(arr.shape[1])
    for j in range(arr.shape[1]):
        col = arr[:, j]
        out[j] = -np.inf if np.isneginf(col).any() else math.fsum(col)
    return out


class _SyncRunner:
    """Runs one task on every block behind a full barrier.

    With a single block and no pool this is the serial engine; no exchange is
    counted because there is no manager-worker boundary.
    """

    def __init__(self, blocks, cfg, parallel):
        self.blocks = blocks
        self.cfg = cfg
        self.parallel = parallel
        self.pool = ThreadPoolExecutor(len(blocks)) if parallel else None
        self.rngs = [rng_for(cfg.seed, DELAY, w) for w in range(len(blocks))]
        self.states = [None] * len(blocks)

    def close(self):
        if self.pool is not None:
            self.pool.shutdown(wait=True)

    def _wrapped(self, w, fn, units):
        started = time.perf_counter()
        out = fn(w, self.blocks[w])
        if self.cfg.delay.active:
            # the serial engine is not part of the worker pool, so no slow factor applies
            who = w if self.parallel else -1
            self.cfg.delay.hold(started, who, len(self.blocks[w]), units, self.rngs[w])
        return out

    def run(self, fn, units, inst):
        if not self.parallel:
            return [self._wrapped(w, fn, units) for w in range(len(self.blocks))]
        futures = [self.pool.submit(self._wrapped, w, fn, units) for w in range(len(self.blocks))]
        out = [f.result() for f in futures]
        inst.comm_rounds += 1
        return out


def _blocks(data, k):
    packed = data.packed
    if k == 1:
        return [packed]
    return [PackedSubjects([data.subjects[i] for i in idx], data.p, data.q)
            for idx in data.partition(k)]


def _check_theta_cm(name, value, t):
    if not np.all(np.isfinite(np.asarray(value, dtype=float))):
        raise EstimationError(f"non-finite {name} update at iteration {t + 1}")


def _synchronous_fit(data, cfg, engine):
    flag_list = []
    theta = _initial_theta(data, cfg, flag_list)
    inst = _Instruments(engine, cfg, data, theta)
    for f in flag_list:
        inst.flag(f, 0)
    k = cfg.workers_k if engine == "pecme" else 1
    if k > len(data):
        raise ValueError(f"{k} workers but only {len(data)} subjects")
    blocks = _blocks(data, k)
    runner = _SyncRunner(blocks, cfg, parallel=(engine == "pecme"))
    N, rows = len(data), data.total_rows
    converged = False
    t = 0
    try:
        for t in range(cfg.max_iter):
            inst.begin_iteration()
            current = theta

            def estep_task(w, block):
                st = block_estep(block, current)
                runner.states[w] = st
                s1, s2, sn = beta_nu_terms(st, current)
                return {"s_beta1": fsum_rows(s1), "s_beta2": fsum_rows(s2), "s_nu": fsum_rows(sn)}

            t0 = time.perf_counter()
            parts = runner.run(estep_task, WORK_UNITS["estep"], inst)
            agg = _aggregate(parts, N, rows)
            inst.add("e_step", time.perf_counter() - t0)

            t0 = time.perf_counter()
            beta = cm.update_beta(agg)
            _check_theta_cm("beta", beta, t)
            inst.add("beta", time.perf_counter() - t0)

            t0 = time.perf_counter()
            nu, clamped = cm.update_nu(agg)
            if clamped:
                inst.flag("nu_clamped", t + 1)
            inst.add("nu", time.perf_counter() - t0)

            t0 = time.perf_counter()

            def a_task(w, block):
                s_a1, s_a2 = a_terms(runner.states[w], beta)
                return {"s_a1": fsum_rows(s_a1), "s_a2": fsum_rows(s_a2)}

            parts = runner.run(a_task, WORK_UNITS["a"], inst)
            a_row = cm.update_A(cm.AggregateStats(
                None, None, None, fsum_rows(np.stack([p["s_a1"] for p in parts])),
                fsum_rows([p["s_a2"] for p in parts]), None, rows, N))
            _check_theta_cm("A", a_row, t)
            inst.add("a", time.perf_counter() - t0)

            t0 = time.perf_counter()

            def psi_task(w, block):
                return {"s_psi": fsum_rows(psi_terms(runner.states[w], beta, a_row))}

            parts = runner.run(psi_task, WORK_UNITS["psi"], inst)
            psi, projected = cm.update_Psi(cm.AggregateStats(
                None, None, None, None, None, fsum_rows(np.stack([p["s_psi"] for p in parts])),
                rows, N))
            if projected:
                inst.flag("psi_projected", t + 1)
            _check_theta_cm("Psi", psi, t)
            inst.add("psi", time.perf_counter() - t0)

            t0 = time.perf_counter()
            partial = Theta(beta, a_row, psi, nu, theta.dec)
            r2_old = theta.dec.rho2
            parts = runner.run(lambda w, block: grid_values(block, partial, 1, r2_old),
                               WORK_UNITS["grid"], inst)
            rho1 = cm.argmax_grid(_sum_grids(parts))
            parts = runner.run(lambda w, block: grid_values(block, partial, 2, rho1),
                               WORK_UNITS["grid"], inst)
            rho2 = cm.argmax_grid(_sum_grids(parts))
            inst.add("dec", time.perf_counter() - t0)

            new = Theta(beta, a_row, psi, nu, DecParams(rho1, rho2))
            runner.states = [None] * len(blocks)
            inst.end_iteration(t, new)
            theta = new
            if check_convergence(current, new, cfg.epsilon):
                converged = True
                break
    finally:
        runner.close()
    return inst.result(theta, t + 1, converged)


def fit_ecme(data, cfg):
    if cfg.engine != "ecme":
        raise ValueError("fit_ecme needs cfg.engine='ecme'")
    return _synchronous_fit(data, cfg, "ecme")


def fit_pecme(data, cfg):
    if cfg.engine != "pecme":
        raise ValueError("fit_pecme needs cfg.engine='pecme'")
    return _synchronous_fit(data, cfg, "pecme")


class _ThreadTransport:
    """Workers are threads with private inboxes; replies share one outbox."""

    def __init__(self, blocks, cfg):
        self.blocks = blocks
        self.cfg = cfg
        self.outbox = queue.Queue()
        self.inboxes = [queue.Queue() for _ in blocks]
        self.threads = []
        self.errors = []
        for w in range(len(blocks)):
            th = threading.Thread(target=self._loop, args=(w,), daemon=True,
                                  name=f"regmvst-worker-{w}")
            th.start()
            self.threads.append(th)

    def _loop(self, w):
        rng = rng_for(self.cfg.seed, DELAY, w)
        block = self.blocks[w]
        while True:
            msg = self.inboxes[w].get()
            if msg is None:
                return
            theta, stamp = msg
            started = time.perf_counter()
            try:
                stats = full_partition_stats(block, theta, stamp)
            except Exception as exc:  # forwarded to the manager, which re-raises
                self.outbox.put((w, exc))
                continue
            if self.cfg.delay.active:
                self.cfg.delay.hold(started, w, len(block), FULL_TASK_UNITS, rng)
            self.outbox.put((w, stats))

    def dispatch(self, w, theta, stamp):
        self.inboxes[w].put((theta, stamp))

    def receive(self, block=True):
        try:
            return self.outbox.get(block=block)
        except queue.Empty:
            return None

    def close(self):
        for box in self.inboxes:
            box.put(None)
        for th in self.threads:
            th.join(timeout=60)


class _VirtualTransport:
    """Deterministic stand-in for threads driven by a simulated clock.

    A task finishes ``delay`` simulated seconds after dispatch (the delay model's
    value, or one unit per subject when no delay is configured). Ties go to the
    lower worker index, so runs are exactly reproducible.
    """

    def __init__(self, blocks, cfg):
        self.blocks = blocks
        self.cfg = cfg
        self.now = 0.0
        self.pending = []
        self.rngs = [rng_for(cfg.seed, DELAY, w) for w in range(len(blocks))]

    def _duration(self, w):
        d = self.cfg.delay
        if d.active:
            return d.seconds(w, len(self.blocks[w]), FULL_TASK_UNITS, self.rngs[w])
        return float(len(self.blocks[w]))

    def dispatch(self, w, theta, stamp):
        try:
            msg = full_partition_stats(self.blocks[w], theta, stamp)
        except Exception as exc:
            msg = exc
        self.pending.append((self.now + self._duration(w), w, msg))

    def receive(self, block=True):
        if not self.pending:
            if block:
                raise EstimationError("no worker is busy; nothing can arrive")
            return None
        self.pending.sort(key=lambda e: (e[0], e[1]))
        if not block and self.pending[0][0] > self.now:
            return None
        finish, w, msg = self.pending.pop(0)
        self.now = max(self.now, finish)
        return w, msg

    def close(self):
        pass


def _as_dict(stats):
    return {"s_beta1": stats.s_beta1, "s_beta2": stats.s_beta2, "s_nu": stats.s_nu,
            "s_a1": stats.s_a1, "s_a2": stats.s_a2, "s_psi": stats.s_psi}


def fit_adecme(data, cfg):
    """Asynchronous ECME with a partial barrier over ceil(gamma k) workers."""
    if cfg.engine != "adecme":
        raise ValueError("fit_adecme needs cfg.engine='adecme'")
    k = cfg.workers_k
    if k > len(data):
        raise ValueError(f"{k} workers but only {len(data)} subjects")
    flag_list = []
    theta = _initial_theta(data, cfg, flag_list)
    inst = _Instruments("adecme", cfg, data, theta)
    for f in flag_list:
        inst.flag(f, 0)
    blocks = _blocks(data, k)
    transport = (_ThreadTransport if cfg.schedule == "threads" else _VirtualTransport)(blocks, cfg)
    coin = rng_for(cfg.seed, SYNC_COIN)
    need = cfg.wait_count
    N, rows = len(data), data.total_rows
    cache = [None] * k
    busy = [False] * k
    last_heard = [0] * k
    lags = Counter()
    converged = False
    t = 0

    def accept(msg):
        w, stats = msg
        if isinstance(stats, Exception):
            raise EstimationError(f"worker {w} failed: {stats}") from stats
        busy[w] = False
        if cache[w] is None or stats.stamp >= cache[w].stamp:
            cache[w] = stats
        return w

    try:
        for t in range(cfg.max_iter):
            inst.begin_iteration()
            current = theta
            t0 = time.perf_counter()
            # late replies from the previous round replace their caches first
            while True:
                msg = transport.receive(block=False)
                if msg is None:
                    break
                last_heard[accept(msg)] = t
            for w in range(k):
                if not busy[w]:
                    transport.dispatch(w, current, t)
                    busy[w] = True
            inst.comm_rounds += 1
            full = t == 0 or coin.random() < cfg.zeta
            arrived = 0
            while True:
                if full:
                    if all(c is not None and c.stamp == t for c in cache):
                        break
                elif arrived >= need:
                    break
                w = accept(transport.receive(block=True))
                last_heard[w] = t
                arrived += 1
                if full and cache[w].stamp < t:
                    transport.dispatch(w, current, t)
                    busy[w] = True
            for w in range(k):
                if t - last_heard[w] > cfg.watchdog:
                    raise EstimationError(
                        f"worker {w} silent for {t - last_heard[w]} iterations (limit "
                        f"{cfg.watchdog}) at iteration {t + 1}")
                lags[t - cache[w].stamp] += 1
            inst.add("e_step", time.perf_counter() - t0)

            agg = _aggregate([_as_dict(c) for c in cache], N, rows)
            t0 = time.perf_counter()
            beta = cm.update_beta(agg)
            _check_theta_cm("beta", beta, t)
            inst.add("beta", time.perf_counter() - t0)
            t0 = time.perf_counter()
            nu, clamped = cm.update_nu(agg)
            if clamped:
                inst.flag("nu_clamped", t + 1)
            inst.add("nu", time.perf_counter() - t0)
            t0 = time.perf_counter()
            a_row = cm.update_A(agg)
            _check_theta_cm("A", a_row, t)
            inst.add("a", time.perf_counter() - t0)
            t0 = time.perf_counter()
            psi, projected = cm.update_Psi(agg)
            if projected:
                inst.flag("psi_projected", t + 1)
            inst.add("psi", time.perf_counter() - t0)
            t0 = time.perf_counter()
            rho1 = cm.argmax_grid(_sum_grids([c.grid.rho1_values for c in cache]))
            rho2 = cm.argmax_grid(_sum_grids([c.grid.rho2_values for c in cache]))
            inst.add("dec", time.perf_counter() - t0)

            new = Theta(beta, a_row, psi, nu, DecParams(rho1, rho2))
            inst.end_iteration(t, new)
            theta = new
            if check_convergence(current, new, cfg.epsilon):
                converged = True
                break
    finally:
        transport.close()
    return inst.result(theta, t + 1, converged, stale_histogram=dict(lags),
                       max_lag=max(lags) if lags else 0)


def fit(data, cfg):
    return {"ecme": fit_ecme, "pecme": fit_pecme, "adecme": fit_adecme}[cfg.engine](data, cfg)


def fit_with_restarts(data, cfg, restarts=1):
    """Run ``restarts`` fits and keep the one with the highest observed log-likelihood.

    The first run uses ``cfg.init``; the others start from random perturbations
    with seeds derived from ``cfg.seed``.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    best, best_ll, scores = None, -np.inf, []
    for r in range(restarts):
        run_cfg = cfg if r == 0 else replace(cfg, init="random",
                                              seed=derive_seed(cfg.seed, RESTART, r))
        res = fit(data, run_cfg)
        ll = observed_loglik(data, res.theta_hat)
        scores.append(ll)
        if ll > best_ll:
            best, best_ll = res, ll
    best.flags.append({"flag": "restarts", "count": restarts, "first_iteration": 0,
                       "final_logliks": scores})
    return best
