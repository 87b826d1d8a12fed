import time
from dataclasses import replace

import numpy as np
import pytest

from regmvst.dec import DecParams
from regmvst.engine import (DelayModel, FitConfig, check_convergence, default_init, fit,
                            fit_with_restarts)
from regmvst.model import observed_loglik
from regmvst.simgen import default_truth, generate


@pytest.fixture(scope="module")
def small():
    return generate(1, 40, 21)


def test_check_convergence_examples():
    th = default_truth()
    assert check_convergence(th, th, 1e-7)
    moved = th.with_(dec=DecParams(0.8, 0.8))
    assert not check_convergence(th, moved, 1e-7)
    nudged = th.with_(nu=th.nu + 5e-8)
    assert check_convergence(th, nudged, 1e-7)
    assert not check_convergence(th, nudged, 0.0)


def test_config_validation():
    for bad in (dict(engine="em"), dict(epsilon=-1.0), dict(max_iter=0), dict(gamma=0.0),
                dict(gamma=1.5), dict(zeta=1.0), dict(init="zeros"), dict(schedule="mpi"),
                dict(workers_k=0)):
        with pytest.raises(ValueError):
            FitConfig(**bad)
    assert FitConfig(workers_k=8, gamma=0.875).wait_count == 7
    assert FitConfig(workers_k=4, gamma=0.875).wait_count == 4
    assert FitConfig(workers_k=4, gamma=0.75).wait_count == 3


def test_delay_model():
    d = DelayModel(kind="slow", per_subject_ms=2.0, slow_worker=1, slow_factor=2.0)
    rng = np.random.default_rng(0)
    assert d.seconds(0, 10, 1.0, rng) == pytest.approx(0.02)
    assert d.seconds(1, 10, 1.0, rng) == pytest.approx(0.04)
    u = DelayModel(kind="uniform", low_ms=1.0, high_ms=3.0)
    assert 0.001 <= u.seconds(0, 5, 1.0, rng) <= 0.003
    with pytest.raises(ValueError):
        DelayModel(kind="uniform", low_ms=3.0, high_ms=1.0)
    with pytest.raises(ValueError):
        DelayModel(pacing="later")


def test_floor_pacing_counts_compute_toward_the_delay(monkeypatch):
    slept = []
    monkeypatch.setattr(time, "sleep", slept.append)
    monkeypatch.setattr(time, "perf_counter", lambda: 10.015)
    rng = np.random.default_rng(0)
    DelayModel(kind="slow", per_subject_ms=2.0).hold(10.0, 1, 10, 1.0, rng)
    DelayModel(kind="slow", per_subject_ms=2.0, pacing="additive").hold(10.0, 1, 10, 1.0, rng)
    DelayModel(kind="slow", per_subject_ms=1.0).hold(10.0, 1, 10, 1.0, rng)
    assert slept == [pytest.approx(0.005), pytest.approx(0.02)]


def test_default_init_is_deterministic(small):
    data, _ = small
    a = default_init(data, 5, mode="random")
    b = default_init(data, 5, mode="random")
    assert np.array_equal(a.flatten(), b.flatten())
    d = default_init(data, 5)
    assert (d.dec.rho1, d.dec.rho2) == (0.5, 0.5)


@pytest.mark.parametrize("engine,k", [("ecme", 1), ("pecme", 3)])
def test_synchronous_engines_are_deterministic_and_count_messages(small, engine, k):
    data, _ = small
    cfg = FitConfig(engine=engine, workers_k=k, max_iter=60, seed=2)
    r1, r2 = fit(data, cfg), fit(data, cfg)
    assert np.array_equal(r1.theta_hat.flatten(), r2.theta_hat.flatten())
    assert r1.comm_rounds == (5 * r1.iterations if engine == "pecme" else 0)
    assert len(r1.iteration_timings) == r1.iterations
    assert set(r1.step_timings) >= {"e_step", "dec", "psi", "a", "beta", "nu", "TT"}


def test_ecme_and_pecme_produce_identical_iterates(small):
    data, _ = small
    a = fit(data, FitConfig(engine="ecme", max_iter=40))
    b = fit(data, FitConfig(engine="pecme", workers_k=4, max_iter=40))
    np.testing.assert_allclose(a.theta_hat.flatten(), b.theta_hat.flatten(), rtol=1e-9, atol=1e-11)


def test_virtual_adecme_is_reproducible(small):
    data, _ = small
    cfg = FitConfig(engine="adecme", workers_k=4, gamma=0.75, schedule="virtual", max_iter=80,
                    seed=4)
    r1, r2 = fit(data, cfg), fit(data, cfg)
    assert np.array_equal(r1.theta_hat.flatten(), r2.theta_hat.flatten())
    assert r1.iterations == r2.iterations
    assert r1.comm_rounds == r1.iterations
    assert r1.stale_histogram == r2.stale_histogram
    assert sum(r1.stale_histogram.values()) == 4 * r1.iterations


def test_threaded_adecme_runs(small):
    data, _ = small
    res = fit(data, FitConfig(engine="adecme", workers_k=3, gamma=0.67, max_iter=30, seed=1))
    assert res.comm_rounds == res.iterations
    assert np.all(np.isfinite(res.theta_hat.flatten()))


def test_adecme_rejects_more_workers_than_subjects():
    data, _ = generate(1, 3, 1)
    with pytest.raises(ValueError):
        fit(data, FitConfig(engine="adecme", workers_k=4))


def test_zero_tolerance_hits_the_cap():
    data, _ = generate(1, 12, 2)
    res = fit(data, FitConfig(epsilon=0.0, max_iter=7))
    assert res.iterations == 7 and not res.converged


def test_ecme_trace_does_not_decrease(small):
    data, _ = small
    res = fit(data, FitConfig(max_iter=60, trace_loglik=True))
    trace = np.array(res.loglik_trace)
    assert np.all(np.diff(trace) >= -1e-8)
    assert trace[0] >= res.loglik_init - 1e-8


def test_restarts_keep_the_best_fit(small):
    data, _ = small
    cfg = FitConfig(max_iter=100, seed=3)
    res = fit_with_restarts(data, cfg, 3)
    flag = [f for f in res.flags if f["flag"] == "restarts"][0]
    assert observed_loglik(data, res.theta_hat) == pytest.approx(max(flag["final_logliks"]))
    with pytest.raises(ValueError):
        fit_with_restarts(data, cfg, 0)


def test_explicit_start_is_used(small):
    data, truth = small
    res = fit(data, replace(FitConfig(max_iter=1), init=truth))
    assert np.array_equal(res.theta_init.flatten(), truth.flatten())
