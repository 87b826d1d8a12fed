import numpy as np
import pytest

from regmvst.cm import (AggregateStats, argmax_grid, nu_score, update_A, update_beta, update_nu,
                        update_Psi)
from regmvst.dec import DecParams, dec_correlation, dec_grid
from regmvst.estep import (block_estep, estep_refresh_A_stats, estep_refresh_Psi_stats,
                           estep_subject, grid_values)
from regmvst.model import (Dataset, EstimationError, PackedSubjects, Subject, Theta,
                           observed_loglik)
from regmvst.mvst import GigParams, MvstParams, gig_moments, mvst_logpdf, quad_forms
from regmvst.simgen import default_truth, generate


def _subject_mvst(s, theta):
    Sigma = dec_correlation(s.t, theta.dec, warn=False)
    return MvstParams(s.x @ theta.beta, np.outer(np.ones(s.n), theta.a_row), Sigma, theta.psi,
                      theta.nu)


def _random_theta(rng):
    psi = rng.normal(size=(2, 2))
    return Theta(rng.normal(size=(3, 2)), rng.normal(size=2) * 2, psi @ psi.T + np.eye(2),
                 rng.uniform(2.5, 20.0), DecParams(rng.choice(dec_grid()[1:-1]),
                                                   rng.choice(dec_grid()[1:-1])))


def test_theta_flatten_roundtrip_and_names():
    th = default_truth()
    vec = th.flatten()
    assert vec.size == len(Theta.names(3, 2)) == 6 + 2 + 3 + 3
    back = Theta.unflatten(vec, 3, 2)
    assert np.array_equal(back.flatten(), vec)
    assert Theta.from_dict(th.to_dict()).flatten() == pytest.approx(vec)


def test_theta_validation():
    th = default_truth()
    with pytest.raises(ValueError):
        Theta(th.beta, [1.0, 2.0, 3.0], th.psi, 5.0, th.dec)
    with pytest.raises(ValueError):
        Theta(th.beta, th.a_row, [[1.0, 0.2], [0.0, 1.0]], 5.0, th.dec)
    with pytest.raises(ValueError):
        th.with_(nu=-1.0)


def test_subject_validation():
    with pytest.raises(ValueError):
        Subject(np.zeros((3, 2)), np.zeros((2, 3)), np.arange(3.0))
    with pytest.raises(ValueError):
        Subject(np.full((1, 2), np.nan), np.zeros((1, 3)), [0.0])


def test_observed_loglik_is_sum_of_subject_densities():
    data, truth = generate(1, 30, 4)
    total = sum(mvst_logpdf(s.y, _subject_mvst(s, truth)) for s in data.subjects)
    assert observed_loglik(data, truth) == pytest.approx(total, rel=1e-10)


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_packed_loglik_per_backend(backend):
    data, truth = generate(1, 25, 5)
    packed = PackedSubjects(data.subjects, data.p, data.q, backend=backend)
    terms = packed.loglik_terms(truth)
    ref = [mvst_logpdf(s.y, _subject_mvst(s, truth)) for s in data.subjects]
    np.testing.assert_allclose(terms, ref, rtol=1e-11)


def test_backends_agree_on_estep_state():
    data, _ = generate(1, 40, 6)
    theta = _random_theta(np.random.default_rng(1))
    a = block_estep(PackedSubjects(data.subjects, 2, 3, backend="numba"), theta)
    b = block_estep(PackedSubjects(data.subjects, 2, 3, backend="numpy"), theta)
    for u, v in ((a.a, b.a), (a.b, b.b), (a.c, b.c)):
        np.testing.assert_allclose(u, v, rtol=1e-8, atol=1e-10)


def test_estep_moments_are_gig_moments_of_the_conditional_law():
    rng = np.random.default_rng(77)
    data, _ = generate(1, 100, 8)
    for s in data.subjects:
        theta = _random_theta(rng)
        st = estep_subject(s, theta)
        f = quad_forms(s.y, _subject_mvst(s, theta))
        lam = -0.5 * (theta.nu + s.n * theta.p)
        m = gig_moments(GigParams(f.rho, f.delta + theta.nu, lam))
        assert st.a == pytest.approx(m.e_w, rel=1e-10)
        assert st.b == pytest.approx(m.e_inv_w, rel=1e-10)
        assert st.c == pytest.approx(m.e_log_w, rel=1e-10, abs=1e-10)


def test_refresh_stats_match_recomputation():
    data, truth = generate(1, 5, 9)
    s = data.subjects[0]
    st = estep_subject(s, truth)
    new = truth.with_(beta=truth.beta + 0.1, a_row=truth.a_row * 0.5)
    s_a1, s_a2 = estep_refresh_A_stats(s, new, st)
    Sinv = np.linalg.inv(dec_correlation(s.t, truth.dec, warn=False))
    one = np.ones(s.n)
    np.testing.assert_allclose(s_a1, one @ Sinv @ (s.y - s.x @ new.beta), rtol=1e-10)
    assert s_a2 == pytest.approx(st.a * one @ Sinv @ one, rel=1e-10)
    R = s.y - s.x @ new.beta
    ref = (st.b * R.T @ Sinv @ R - np.outer(new.a_row, one @ Sinv @ R)
           - np.outer(R.T @ Sinv @ one, new.a_row) + st.a * (one @ Sinv @ one)
           * np.outer(new.a_row, new.a_row))
    np.testing.assert_allclose(estep_refresh_Psi_stats(s, new, st), ref, rtol=1e-9, atol=1e-12)


def test_grid_values_equal_loglik_at_each_grid_point():
    data, truth = generate(1, 20, 10)
    vals = grid_values(data.packed, truth, 1, truth.dec.rho2)
    for r1, v in zip(dec_grid(), vals):
        th = truth.with_(dec=DecParams(r1, truth.dec.rho2))
        assert v == pytest.approx(observed_loglik(data, th), rel=1e-11)


def _agg(**kw):
    base = dict(S_beta1=np.eye(2), S_beta2=np.ones((2, 1)), S_nu=0.0, S_a1=np.ones(1), S_a2=2.0,
                S_psi=np.eye(1), total_rows=4, N=2)
    base.update(kw)
    return AggregateStats(**base)


def test_update_nu_solves_its_score_equation():
    for nu_true in (0.8, 3.0, 12.0, 150.0):
        target = nu_score(nu_true, 0.0)
        nu, clamped = update_nu(_agg(S_nu=target * 2, N=2))
        assert not clamped and nu == pytest.approx(nu_true, rel=1e-7)


def test_update_nu_clamps_at_bounds():
    # the score at nu=0.05 is about 37.8 and at nu=500 about 1.001 when target=0
    assert update_nu(_agg(S_nu=50.0 * 2)) == (0.05, True)
    assert update_nu(_agg(S_nu=1.0 * 2)) == (500.0, True)


def test_cm_closed_forms_and_failures():
    assert update_beta(_agg(S_beta1=np.diag([2.0, 4.0]))) == pytest.approx(np.array([[0.5],
                                                                                      [0.25]]))
    with pytest.raises(EstimationError):
        update_beta(_agg(S_beta1=np.zeros((2, 2))))
    assert update_A(_agg()) == pytest.approx([0.5])
    psi, projected = update_Psi(_agg(S_psi=np.array([[1.0, 2.0], [2.0, 1.0]])))
    assert projected and np.linalg.eigvalsh(psi).min() > 0
    with pytest.raises(EstimationError):
        update_Psi(_agg(total_rows=0))


def test_argmax_grid_breaks_ties_toward_first_entry():
    v = np.zeros(11)
    v[[3, 7]] = 5.0
    assert argmax_grid(v) == pytest.approx(0.3)
    with pytest.raises(EstimationError):
        argmax_grid(np.full(11, -np.inf))


def test_dataset_rejects_mixed_dimensions():
    a = Subject(np.zeros((2, 2)), np.zeros((2, 3)), [0.0, 1.0])
    b = Subject(np.zeros((2, 1)), np.zeros((2, 3)), [0.0, 1.0])
    with pytest.raises(ValueError):
        Dataset([a, b])
    with pytest.raises(ValueError):
        Dataset([])
