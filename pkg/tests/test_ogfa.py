import math

import numpy as np
import pytest

from ordgraph import ogfa, ordinal
from ordgraph.errors import BadDimensions, EmptyStateList
from ordgraph.ogfa import Hyper, OgfaState, P_RATINGS, P_THETA, phase_stream
from ordgraph.rng import RngStream, make_rng, sample_dirichlet, sample_gamma
from ordgraph.sparse import build_adjacency, build_ordinal


def small_problem(seed=1, U=30, I=25, K=3, V=4):
    hy = Hyper(c_init=0.3, eta=0.2, c0=50.0)
    return ogfa.simulate(U, I, K, V, hy, [0.5, 0.3, 0.2, 0.1][:V], make_rng(seed))


def check_invariants(st: OgfaState):
    assert np.allclose(st.phi.sum(axis=0), 1.0, atol=1e-8)
    assert np.all(st.phi >= 0)
    for arr in (st.theta, st.c):
        assert np.all(arr > 0) and np.all(np.isfinite(arr))


def test_init_single_column():
    st = ogfa.init_state(4, 6, 1, 3, rng=RngStream(0))
    assert st.phi.shape == (6, 1)
    assert st.phi.sum() == pytest.approx(1.0)
    assert st.tm.delta.tolist() == [1 / 3] * 3


def test_init_deterministic():
    a = ogfa.init_state(5, 7, 3, 2, rng=RngStream(4))
    b = ogfa.init_state(5, 7, 3, 2, rng=RngStream(4))
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.phi, b.phi)
    assert np.array_equal(a.scales, b.scales)


def test_init_prior_mean():
    st = ogfa.init_state(1000, 3, 10, 2, Hyper(r=1.0, c_init=1.0), RngStream(1))
    assert abs(st.theta.mean() - 1.0) < 0.03


def test_init_rejects_bad_dims():
    with pytest.raises(BadDimensions):
        ogfa.init_state(0, 3, 2, 2)


def test_augment_empty(rng):
    Y = build_ordinal([], 3, 4, 2)
    rc = ogfa.augment_ratings(Y, np.ones((3, 2)), np.full((4, 2), 0.25), ordinal.uniform_thresholds(2), rng)
    assert not rc.user_agg.any() and not rc.item_agg.any()
    assert rc.n.size == 0


def test_augment_single_community(rng):
    sim = small_problem()
    st = ogfa.init_state(30, 25, 1, 4, rng=RngStream(3))
    rc = ogfa.augment_ratings(sim.Y, st.theta, st.phi, st.tm, rng)
    assert np.array_equal(rc.thinned[:, 0], rc.n)
    assert np.array_equal(rc.thinned.sum(axis=1), rc.n)


def test_augment_top_level_moments():
    n_cells = 10**6
    tm = ordinal.from_deltas([0.5, 1.0])
    # one user-item pair repeated as separate users so each cell is independent
    Y = build_ordinal([(u, 0, 2) for u in range(n_cells)], n_cells, 1, 2)
    theta = np.full((n_cells, 1), 2.0)
    rc = ogfa.augment_ratings(Y, theta, np.ones((1, 1)), tm, RngStream(9))
    rate = 2.0 * 1.0
    assert abs(rc.n.mean() - rate / -math.expm1(-rate)) < 0.01


def test_augment_aggregates_match_recount():
    sim = small_problem()
    st = ogfa.init_state(30, 25, 3, 4, rng=RngStream(2))
    rc = ogfa.augment_ratings(sim.Y, st.theta, st.phi, st.tm, RngStream(5))
    U = np.zeros((30, 3), dtype=np.int64)
    I = np.zeros((25, 3), dtype=np.int64)
    for j, (u, i, _) in enumerate(sim.Y.iter_rows()):
        U[u] += rc.thinned[j]
        I[i] += rc.thinned[j]
    assert np.array_equal(U, rc.user_agg) and np.array_equal(I, rc.item_agg)


def test_phi_prior_when_no_counts():
    draws = [ogfa.sample_phi(np.zeros((4, 2), dtype=np.int64), 0.5, make_rng(s)) for s in range(4000)]
    assert np.allclose(np.mean(draws, axis=0), 0.25, atol=0.01)


def test_phi_concentrates_on_counts(rng):
    agg = np.zeros((10, 1), dtype=np.int64)
    agg[0, 0] = 100
    draws = np.array([ogfa.sample_phi(agg, 0.01, rng)[0, 0] for _ in range(2000)])
    assert draws.mean() >= 0.99


def test_phi_single_item(rng):
    assert ogfa.sample_phi(np.array([[3, 0]]), 0.05, rng).tolist() == [[1.0, 1.0]]


def test_theta_prior_without_data():
    theta = np.ones((1, 1))
    shape, rate = ogfa.theta_conditional(np.zeros((1, 1)), 0, theta, np.zeros(1), np.ones(1), 1.0, 0.0)
    assert (shape[0, 0], rate[0, 0]) == (1.0, 1.0)


def test_theta_conditional_moments():
    shape = np.full((10**6, 1), 5.0)
    rate = np.full((10**6, 1), 2.0)
    x = ogfa.sample_theta_from(shape, rate, RngStream(1))
    assert abs(x.mean() - 2.5) < 0.01


def test_theta_graph_disabled_reduces_to_ratings_only():
    gen = make_rng(0)
    theta = gen.random((5, 3)) + 0.1
    agg = gen.integers(0, 4, (5, 3))
    shape, rate = ogfa.theta_conditional(agg, 0, theta, np.zeros(3), np.full(5, 2.0), 1.0)
    assert np.array_equal(shape, 1.0 + agg)
    assert np.all(rate == 3.0)


def test_theta_conditional_permutation_equivariant():
    # relabelling users permutes the conditional, nothing else changes
    gen = make_rng(3)
    theta = gen.random((7, 2)) + 0.1
    agg, m = gen.integers(0, 5, (7, 2)), gen.integers(0, 3, (7, 2))
    c, s = gen.random(7) + 0.5, gen.random(2)
    perm = gen.permutation(7)
    a = ogfa.theta_conditional(agg, m, theta, s, c, 1.0)
    b = ogfa.theta_conditional(agg[perm], m[perm], theta[perm], s, c[perm], 1.0)
    assert np.allclose(a[0][perm], b[0]) and np.allclose(a[1][perm], b[1], rtol=1e-12)


def test_rating_exposure_exact_form():
    tm = ordinal.from_deltas([0.6, 0.3, 0.2])  # gamma = [1.1, 0.5, 0.2, 0]
    Y = build_ordinal([(0, 0, 1), (0, 1, 3), (1, 1, 2)], 2, 3, 3)
    phi = np.array([[0.2, 0.5], [0.3, 0.1], [0.5, 0.4]])
    T = {0: 1.1, 1: 1.1, 2: 0.5, 3: 0.2}
    dense = Y.to_dense()
    brute = np.array([[sum(phi[i, k] * T[dense[u, i]] for i in range(3)) for k in range(2)]
                      for u in range(2)])
    assert np.allclose(ogfa.rating_exposure(Y, phi, tm, True), brute)
    assert ogfa.rating_exposure(Y, phi, tm, False) == 1.0


def test_sweep_deterministic_and_pure():
    sim = small_problem()
    st = ogfa.init_state(30, 25, 3, 4, rng=RngStream(2))
    before = st.copy()
    a = ogfa.gibbs_sweep(sim.Y, sim.A, st, RngStream(7))
    b = ogfa.gibbs_sweep(sim.Y, sim.A, st, RngStream(7))
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.phi, b.phi)
    assert np.array_equal(a.tm.delta, b.tm.delta)
    assert np.array_equal(st.theta, before.theta)
    assert a.sweep == 1


def test_sweep_invariants_hold():
    sim = small_problem()
    st = ogfa.init_state(30, 25, 3, 4, rng=RngStream(2))
    stream = RngStream(8)
    for _ in range(20):
        st = ogfa.gibbs_sweep(sim.Y, sim.A, st, stream)
        check_invariants(st)
        assert np.all(st.scales > 0)
        assert np.all(np.diff(st.tm.gamma) < 0)


def test_sweep_workers_do_not_change_result():
    hy = Hyper(c_init=0.02, eta=0.5, c0=1000.0)
    sim = ogfa.simulate(400, 200, 4, 3, hy, [0.5, 0.3, 0.2], make_rng(3))
    assert sim.Y.nnz > 16384
    st = ogfa.init_state(400, 200, 4, 3, rng=RngStream(1))
    a = ogfa.gibbs_sweep(sim.Y, sim.A, st, RngStream(2), workers=1)
    b = ogfa.gibbs_sweep(sim.Y, sim.A, st, RngStream(2), workers=4)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.phi, b.phi)


def test_berpo_special_case_has_unit_exposure():
    # V = 1 with gamma_0 = 1: the exact exposure collapses to 1, so both
    # variants of the sweep coincide bit for bit
    sim = ogfa.simulate(20, 15, 2, 1, Hyper(c_init=0.5), [1.0], make_rng(5))
    base = dict(learn_thresholds=False)
    s0 = ogfa.init_state(20, 15, 2, 1, Hyper(**base), RngStream(1), graph=False)
    s1 = ogfa.init_state(20, 15, 2, 1, Hyper(exact_exposure=True, **base), RngStream(1), graph=False)
    s0.tm = s1.tm = ordinal.from_deltas([1.0])
    for _ in range(5):
        s0 = ogfa.gibbs_sweep(sim.Y, None, s0, RngStream(3))
        s1 = ogfa.gibbs_sweep(sim.Y, None, s1, RngStream(3))
    assert np.array_equal(s0.theta, s1.theta)
    assert s0.tm.delta.tolist() == [1.0]
    assert np.all(s0.scales == 0)


def test_heldout_loglik_improves():
    sim = ogfa.simulate(80, 60, 3, 4, Hyper(c_init=0.3, eta=0.2, c0=100.0),
                        [0.5, 0.3, 0.2, 0.1], make_rng(11))
    g = make_rng(12)
    pu, pi = g.integers(0, 80, 2000), g.integers(0, 60, 2000)
    lam = np.sum(sim.theta[pu] * sim.phi[pi], axis=1)
    test = np.column_stack([pu, pi, ordinal.quantize(lam / g.standard_exponential(2000), sim.tm)])
    st = ogfa.init_state(80, 60, 3, 4, Hyper(eta=0.2), RngStream(1))
    stream = RngStream(2)
    lls = []
    for _ in range(300):
        st = ogfa.gibbs_sweep(sim.Y, sim.A, st, stream)
        lls.append(ogfa.heldout_loglik(test, [st]))
    assert lls[-1] > lls[0]


def test_simulated_levels_follow_pmf():
    U, I = 1000, 1000
    theta = np.full((U, 1), 1.3)
    phi = np.ones((I, 1))
    tm = ordinal.from_deltas([0.5, 0.4, 0.3, 0.2])
    Y = ogfa.simulate_ratings(theta, phi, tm, make_rng(1))
    freq = np.bincount(Y.to_dense().ravel(), minlength=5) / (U * I)
    assert np.allclose(freq, ordinal.pmf(1.3, np.arange(5), tm), atol=0.002)


def test_simulate_sparse_limit():
    sim = ogfa.simulate(50, 40, 2, 3, Hyper(r=1e-3), [0.5, 0.3, 0.2], make_rng(2))
    assert sim.Y.nnz < 0.05 * 50 * 40


def test_simulated_edge_frequency():
    U = 1500
    theta = np.ones((U, 1))
    rate = 0.7
    A = ogfa.simulate_graph(theta, np.array([rate]), make_rng(3))
    pairs = U * (U - 1) / 2
    assert abs(A.n_edges / pairs - (1 - math.exp(-rate))) < 0.002


def test_predict_scores_examples():
    st = OgfaState(np.array([[2.0]]), np.array([[0.25], [0.75]]), np.zeros(1),
                   ordinal.from_deltas([1.0]), np.ones(1))
    assert ogfa.predict_scores([st], [0], [0])[0, 0] == 0.5
    a = (np.array([[1.0]]), np.array([[1.0]]))
    b = (np.array([[3.0]]), np.array([[1.0]]))
    assert ogfa.predict_scores([a, b])[0, 0] == 2.0
    with pytest.raises(EmptyStateList):
        ogfa.predict_scores([])


def test_predict_scores_item_permutation():
    gen = make_rng(4)
    st = (gen.random((4, 3)), gen.random((6, 3)))
    perm = gen.permutation(6)
    full = ogfa.predict_scores([st])
    assert np.array_equal(ogfa.predict_scores([st], items=perm)[:, np.argsort(perm)], full)


def test_heldout_loglik_examples():
    st = OgfaState(np.array([[1.0]]), np.array([[1.0]]), np.zeros(1),
                   ordinal.from_deltas([1.0, 1.0, 1.0]), np.ones(1))
    assert ogfa.heldout_loglik([[0, 0, 0]], [st]) == -3.0
    st.tm = ordinal.from_deltas([1e-12, 1e3])
    st.theta[:] = 1e4
    assert ogfa.heldout_loglik([[0, 0, 2]], [st]) == pytest.approx(0.0, abs=1e-10)
    two = np.array([[0, 0, 1], [0, 0, 2]])
    st.tm = ordinal.from_deltas([0.4, 0.7])
    st.theta[:] = 1.5
    parts = [ogfa.heldout_loglik(two[j:j + 1], [st]) for j in range(2)]
    assert ogfa.heldout_loglik(two, [st]) == pytest.approx(sum(parts), rel=1e-14)


def batch_se(x, n_batches=50):
    b = x[: len(x) // n_batches * n_batches].reshape(n_batches, -1).mean(axis=1)
    return b.std(ddof=1) / math.sqrt(n_batches)


def geweke(tm, kernel, rounds, seed, phi_fixed=None, U=6, I=5, K=2):
    """Marginal-conditional vs successive-conditional statistics, in MC standard errors."""
    g = make_rng(seed)
    th = sample_gamma(1.0, 1.0, g, size=(rounds, U, K))
    if phi_fixed is None:
        ph = sample_dirichlet(np.ones((rounds, I, K)), g, axis=1)
    else:
        ph = np.broadcast_to(phi_fixed, (rounds, I, K))
    lam = th @ ph.transpose(0, 2, 1)
    y = ordinal.quantize(lam / g.standard_exponential(lam.shape), tm)
    fwd = np.column_stack([th.mean(axis=(1, 2)), y.mean(axis=(1, 2)), (y > 0).mean(axis=(1, 2))])

    st = OgfaState(th[0].copy(), ph[0].copy(), np.zeros(K), tm, np.ones(U),
                   Hyper(eta=1.0, resample_c=False, learn_thresholds=False, exact_exposure=True))
    Y = ogfa.simulate_ratings(st.theta, st.phi, tm, g)
    stream = RngStream(seed + 1)
    chain = np.empty((rounds, 3))
    for r in range(rounds):
        st = kernel(Y, st, stream)
        Y = ogfa.simulate_ratings(st.theta, st.phi, tm, g)
        d = Y.to_dense()
        chain[r] = [st.theta.mean(), d.mean(), (d > 0).mean()]
    z = [(chain[:, j].mean() - fwd[:, j].mean())
         / math.hypot(fwd[:, j].std() / math.sqrt(rounds), batch_se(chain[:, j]))
         for j in range(3)]
    return np.array(z)


@pytest.mark.slow
def test_geweke_full_sweep_berpo():
    # Every conditional of the sweep is exact when V = 1 and gamma_0 = 1.
    z = geweke(ordinal.from_deltas([1.0]), lambda Y, st, s: ogfa.gibbs_sweep(Y, None, st, s),
               20000, seed=21)
    assert np.all(np.abs(z) < 3), z


@pytest.mark.slow
def test_geweke_theta_kernel_ordinal():
    # V = 3: augmentation plus the theta conditional with the exact exposure,
    # item loadings held at a fixed draw.
    tm = ordinal.from_deltas([0.6, 0.3, 0.2])
    phi = sample_dirichlet(np.ones((5, 2)), make_rng(99), axis=0)

    def kernel(Y, st, stream):
        s = st.sweep + 1
        rc = ogfa.augment_ratings(Y, st.theta, st.phi, st.tm, phase_stream(stream, P_RATINGS, s))
        expo = ogfa.rating_exposure(Y, st.phi, st.tm, True)
        theta = ogfa.sample_theta(rc, None, st, phase_stream(stream, P_THETA, s), 1, expo)
        return OgfaState(theta, st.phi, st.scales, st.tm, st.c, st.hyper, s)

    z = geweke(tm, kernel, 20000, seed=22, phi_fixed=phi)
    assert np.all(np.abs(z) < 3), z
