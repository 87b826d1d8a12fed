import numpy as np
import pytest
from scipy.special import polygamma

from regmvst.info import (VecSkewTParams, complete_info, duplication_matrix, identified_indices,
                          loewner_gap, observed_info_mc, rate_matrices, regression_loglik,
                          regression_scores, restrict, skewt_score, unvech, vech)
from regmvst.mvst import vec_skewt_logpdf
from regmvst.special import DomainError


def _params(rng, n=2, p=2, q=1, nu=7.0):
    S = rng.normal(size=(n, n))
    P = rng.normal(size=(p, p))
    return VecSkewTParams(rng.normal(size=p * q), rng.normal(size=p), S @ S.T + n * np.eye(n),
                          P @ P.T + p * np.eye(p), nu, rng.normal(size=(n, q)))


def test_duplication_and_vech():
    S = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    D = duplication_matrix(3)
    assert np.array_equal(D @ vech(S), S.reshape(-1, order="F"))
    assert np.array_equal(unvech(vech(S), 3), S)


def test_skewt_score_matches_central_differences():
    rng = np.random.default_rng(5)
    d = 3
    A = rng.normal(size=(d, d))
    Omega = A @ A.T + d * np.eye(d)
    mu, gamma, nu = rng.normal(size=d), rng.normal(size=d), 6.5
    y = rng.normal(size=d) * 2
    score = skewt_score(y, mu, gamma, Omega, nu)
    vec = np.concatenate([mu, gamma, vech(Omega), [nu]])
    assert score.shape == vec.shape

    def at(v):
        return vec_skewt_logpdf(y, v[:d], v[d:2 * d], unvech(v[2 * d:-1], d), v[-1])

    h = 1e-5
    for i in range(vec.size):
        e = np.zeros(vec.size)
        e[i] = h
        fd = (at(vec + e) - at(vec - e)) / (2 * h)
        assert score[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_regression_scores_match_central_differences():
    rng = np.random.default_rng(8)
    prm = _params(rng)
    Y = rng.normal(size=(prm.n, prm.p))
    score = regression_scores(Y[None], prm)[0]
    base = prm.to_dict()
    vec = np.concatenate([prm.b_vec, prm.a_vec, vech(prm.Sigma), vech(prm.Psi), [prm.nu]])
    sl = prm.block_slices()

    def at(v):
        d = dict(base)
        d["b_vec"], d["a_vec"] = v[sl["b"]], v[sl["a"]]
        d["Sigma"], d["Psi"] = unvech(v[sl["sigma"]], prm.n), unvech(v[sl["psi"]], prm.p)
        d["nu"] = v[sl["nu"]][0]
        return regression_loglik(Y, VecSkewTParams.from_dict(d))

    h = 1e-5
    for i in range(vec.size):
        e = np.zeros(vec.size)
        e[i] = h
        fd = (at(vec + e) - at(vec - e)) / (2 * h)
        assert score[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_complete_information_nu_entry_and_symmetry():
    for nu in (2.5, 5.0, 40.0):
        prm = _params(np.random.default_rng(1), nu=nu)
        I_c = complete_info(prm)
        assert I_c[-1, -1] == pytest.approx(polygamma(1, nu / 2) / 4 - 1 / (2 * nu), rel=1e-10)
        assert np.array_equal(I_c, I_c.T)
    with pytest.raises(DomainError):
        complete_info(_params(np.random.default_rng(1), nu=2.0))


def test_scale_direction_is_not_identified():
    # Sigma -> c Sigma, Psi -> Psi / c leaves the density unchanged
    prm = _params(np.random.default_rng(2))
    idx = identified_indices(prm)
    assert idx.size == prm.dim - 1
    assert prm.block_slices()["sigma"].start not in idx


def test_rate_matrices_identities():
    prm = _params(np.random.default_rng(3), n=1, p=1)
    I_c = complete_info(prm)
    obs = observed_info_mc(prm, 4000, seed=1)
    idx = identified_indices(prm)
    r = rate_matrices(restrict(I_c, idx), restrict(obs.matrix, idx))
    assert r.s_min + r.r_max == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(r.S + r.R, np.eye(idx.size), atol=1e-12)
    lam, vec = loewner_gap(restrict(I_c, idx), restrict(obs.matrix, idx))
    assert vec.shape == (idx.size,)


def test_observed_info_is_reproducible_and_validated():
    prm = _params(np.random.default_rng(4), n=1, p=1)
    a = observed_info_mc(prm, 2500, seed=9, keep_scores=False)
    b = observed_info_mc(prm, 2500, seed=9, keep_scores=False)
    assert np.array_equal(a.matrix, b.matrix) and a.scores is None
    with pytest.raises(ValueError):
        observed_info_mc(prm, 10, seed=1)
    with pytest.raises(DomainError):
        observed_info_mc(_params(np.random.default_rng(4), n=1, p=1, nu=4.0), 2000, seed=1)


def test_params_validation():
    with pytest.raises(ValueError):
        VecSkewTParams([1.0], [1.0, 2.0], np.eye(2), np.eye(2), 5.0, np.ones((2, 1)))
