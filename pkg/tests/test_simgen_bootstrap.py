import numpy as np
import pytest

from regmvst.bootstrap import BootstrapConfig, bootstrap_ci, coverage_count, resample_indices
from regmvst.engine import FitConfig
from regmvst.simgen import SchemeConfig, bernoulli_mean, default_truth, generate


def test_generate_is_deterministic_and_shaped():
    a, truth = generate(1, 50, 9)
    b, _ = generate(1, 50, 9)
    c, _ = generate(1, 50, 10)
    assert len(a) == 50 and a.p == 2 and a.q == 3
    assert all(np.array_equal(s.y, u.y) for s, u in zip(a.subjects, b.subjects))
    assert not np.array_equal(a.subjects[0].y, c.subjects[0].y)
    assert np.array_equal(truth.flatten(), default_truth().flatten())
    for s in a.subjects:
        assert s.n >= 2 and np.all(np.diff(s.t) >= 0) and np.all(s.t >= 0)
        assert set(np.unique(s.x[:, 2])) <= {0.0, 1.0}
        assert np.all(s.x[:, 0] > 0)


def test_prefix_stability():
    # subject i depends only on (seed, i), so a larger N extends a smaller one
    small, _ = generate(3, 10, 5)
    big, _ = generate(3, 20, 5)
    for s, u in zip(small.subjects, big.subjects):
        assert np.array_equal(s.y, u.y)


def test_scheme_validation():
    with pytest.raises(ValueError):
        SchemeConfig("s2", 10, 0)
    with pytest.raises(ValueError):
        generate(4, 10, 0)


def test_bernoulli_mean_is_a_probability():
    t = np.linspace(0, 4, 41)
    m = bernoulli_mean(t)
    assert np.all((m >= 0) & (m <= 1))


def test_scheme_one_sample_mean_matches_skewness():
    # E[Y - X beta] = E[W] a_row = nu / (nu - 2) * a_row for inverse-gamma mixing
    data, truth = generate(1, 3000, 1)
    # subject-level residual means are independent with that expectation
    means = np.array([(s.y - s.x @ truth.beta).mean(axis=0) for s in data.subjects])
    expected = truth.nu / (truth.nu - 2.0) * truth.a_row
    se = means.std(axis=0, ddof=1) / np.sqrt(len(data))
    assert np.all(np.abs(means.mean(axis=0) - expected) < 5 * se)


def test_resample_indices_reproducible():
    assert np.array_equal(resample_indices(30, 4, 2), resample_indices(30, 4, 2))
    assert not np.array_equal(resample_indices(30, 4, 2), resample_indices(30, 4, 3))
    idx = resample_indices(30, 4, 2)
    assert idx.min() >= 0 and idx.max() < 30


def test_bootstrap_small_run():
    data, truth = generate(1, 60, 3)
    cfg = BootstrapConfig(B=4, level=0.9, fit=FitConfig(max_iter=300, epsilon=1e-5), seed=1)
    res = bootstrap_ci(data, cfg)
    assert res.replicates.shape == (4 - res.dropped, len(res.names))
    assert np.all(res.lo <= res.hi)
    # percentile rule: linear interpolation between order statistics
    j = res.names.index("beta_11")
    assert res.lo[j] == pytest.approx(np.quantile(res.replicates[:, j], 0.05))
    assert coverage_count([res], j, res.lo[j]) == 1
    assert res.to_dict()["replicates_used"] == 4 - res.dropped


def test_bootstrap_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(B=1)
    with pytest.raises(ValueError):
        BootstrapConfig(level=1.0)
