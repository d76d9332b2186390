"""Shallow joint model of ordinal ratings and a social graph.

Generative story, per user u, item i and community k::

    theta_uk ~ Gam(r_k, 1/c_u)          phi_k ~ Dir(eta)
    s_k ~ Gam(gamma0/K, 1/c0)           lam_ui = sum_k theta_uk phi_ik
    y_ui = ordinal level of lam_ui * eps, eps ~ IG(1, 1)
    a_uv = 1(sum_k Pois(theta_uk s_k theta_vk) >= 1)

Inference is a hybrid Gibbs-EM sweep: latent counts are augmented on the
nonzero ratings and observed edges only, factors are redrawn from their
conjugate conditionals, and the threshold gaps are set by a closed-form EM
step. Every phase draws from its own tagged stream (see ``parallel``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ordinal
from .errors import BadDimensions, EmptyStateList, NonPositiveParameter
from .graphlink import (
    EdgeCounts,
    graph_exposure,
    sample_community_scales,
    sample_edge_counts,
)
from .ordinal import ThresholdModel, ThresholdStats
from .parallel import run_partitioned, single_generator, timed
from .rng import RngStream, multinomial_thin, sample_dirichlet, sample_gamma, sample_ztp
from .sparse import AdjacencyGraph, OrdinalMatrix, build_adjacency, build_ordinal

# phase ids used in stream tags; deeper layers add LAYER_STRIDE * (layer - 1)
P_RATINGS = 1
P_EDGES = 2
P_PHI = 3
P_THETA = 4
P_SCALES = 5
P_RATES = 6
P_CRT = 7
P_THIN = 8
LAYER_STRIDE = 16


def phase_stream(stream: RngStream, phase: int, sweep: int, layer: int = 1) -> RngStream:
    return stream.child(phase + LAYER_STRIDE * (layer - 1), sweep)


@dataclass
class Hyper:
    r: float = 1.0
    c_init: float = 1.0
    c0: float = 1.0
    gamma0: float = 1.0
    eta: float = 0.05
    e0: float = 1.0
    f0: float = 1.0
    resample_c: bool = True
    learn_thresholds: bool = True
    # rate exposure sum_i phi_ik T(y_ui) instead of the unit exposure
    exact_exposure: bool = False

    def validate(self):
        for name in ("r", "c_init", "c0", "gamma0", "eta", "e0", "f0"):
            if not getattr(self, name) > 0:
                raise NonPositiveParameter(f"hyperparameter {name} must be > 0")


@dataclass
class OgfaState:
    theta: np.ndarray      # (U, K)
    phi: np.ndarray        # (I, K), columns on the simplex
    scales: np.ndarray     # (K,); zeros when the graph is disabled
    tm: ThresholdModel
    c: np.ndarray          # (U,) gamma rate of theta_u
    hyper: Hyper = field(default_factory=Hyper)
    sweep: int = 0

    @property
    def K(self) -> int:
        return self.theta.shape[1]

    def copy(self) -> "OgfaState":
        return replace(self, theta=self.theta.copy(), phi=self.phi.copy(),
                       scales=self.scales.copy(), c=self.c.copy())

    def rates(self, users, items) -> np.ndarray:
        return np.sum(self.theta[users] * self.phi[items], axis=1)


@dataclass
class RatingCounts:
    n: np.ndarray          # (nnz,) latent counts
    thinned: np.ndarray    # (nnz, K)
    user_agg: np.ndarray   # (U, K) c_u.k
    item_agg: np.ndarray   # (I, K) c_.ik
    lam: np.ndarray        # (nnz,) rates used for augmentation
    stats: ThresholdStats


def init_state(U: int, I: int, K: int, V: int, hyper: Hyper | None = None, rng=None,
               graph: bool = True) -> OgfaState:
    """Prior draws for every factor; thresholds start evenly spaced."""
    hyper = hyper or Hyper()
    if min(U, I, K, V) < 1:
        raise BadDimensions("U, I, K and V must all be >= 1")
    hyper.validate()
    rng = single_generator(rng if rng is not None else RngStream(0))
    c = np.full(U, float(hyper.c_init))
    theta = sample_gamma(hyper.r, 1.0 / c[:, None], rng, size=(U, K))
    phi = sample_dirichlet(np.full((I, K), hyper.eta), rng, axis=0)
    if graph:
        scales = sample_gamma(hyper.gamma0 / K, 1.0 / hyper.c0, rng, size=(K,))
    else:
        scales = np.zeros(K)
    return OgfaState(theta, phi, scales, ordinal.uniform_thresholds(V), c, hyper, 0)


init = init_state


def zero_lambda_total(theta, phi, users, lam_nonzero) -> float:
    """Sum of lam over cells that are not stored nonzeros."""
    full = float(theta.sum(axis=0) @ phi.sum(axis=0))
    return max(full - float(np.sum(lam_nonzero)), 0.0)


def augment_ratings(Y: OrdinalMatrix, theta, phi, tm: ThresholdModel, rng,
                    workers: int = 1) -> RatingCounts:
    """Latent counts for every nonzero rating, thinned over communities."""
    U, K = theta.shape
    I = phi.shape[0]
    users, items, levels = Y.users, Y.items, Y.levels

    def part(lo, hi, gen):
        terms = theta[users[lo:hi]] * phi[items[lo:hi]]
        lam = terms.sum(axis=1)
        n = sample_ztp(lam * tm.delta[levels[lo:hi] - 1], gen)
        return lam, n, multinomial_thin(n, terms, gen)

    parts = run_partitioned(rng, Y.nnz, part, workers)
    if parts:
        lam = np.concatenate([p[0] for p in parts])
        n = np.concatenate([p[1] for p in parts])
        thinned = np.concatenate([p[2] for p in parts])
    else:
        lam, n = np.zeros(0), np.zeros(0, dtype=np.int64)
        thinned = np.zeros((0, K), dtype=np.int64)
    user_agg = _scatter_rows(users, thinned, U)
    item_agg = _scatter_rows(items, thinned, I)
    stats = ordinal.accumulate_stats(levels, n, lam, tm.V, zero_lambda_total(theta, phi, users, lam))
    return RatingCounts(n, thinned, user_agg, item_agg, lam, stats)


def _scatter_rows(index, rows, n_rows):
    K = rows.shape[1]
    out = np.empty((n_rows, K), dtype=np.int64)
    for k in range(K):
        out[:, k] = np.bincount(index, weights=rows[:, k], minlength=n_rows)
    return out


def sample_phi(item_agg: np.ndarray, eta: float, rng, workers: int = 1) -> np.ndarray:
    """Column-wise Dirichlet conditional Dir(eta + c_.ik)."""
    I, K = item_agg.shape
    alpha = eta + item_agg.astype(np.float64)
    per = max(1, 16384 // max(I, 1))
    parts = run_partitioned(rng, K, lambda lo, hi, g: sample_dirichlet(alpha[:, lo:hi], g, axis=0),
                            workers, size=per)
    return np.concatenate(parts, axis=1)


def theta_conditional(rating_user_agg, edge_user_agg, theta, scales, c, prior_shape,
                      rating_exposure=1.0):
    """Shape and rate of every theta_uk given fresh counts.

    The rating exposure is sum_i phi_ik = 1 because all U x I cells are
    modelled; the graph exposure is s_k * sum_{v != u} theta_vk.
    """
    shape = prior_shape + rating_user_agg + edge_user_agg
    rate = c[:, None] + rating_exposure + graph_exposure(theta, scales)
    return shape, rate


def rating_exposure(Y: OrdinalMatrix, phi, tm: ThresholdModel, exact: bool):
    """Rating-side rate exposure of theta_uk.

    The default is 1 (= sum_i phi_ik). With ``exact`` every cell contributes
    phi_ik * T(y_ui), T(0) = gamma_0 and T(v) = gamma_{v-1}, the coefficient
    of lam_ui in the augmented log-likelihood.
    """
    if not exact:
        return 1.0
    lv = Y.levels
    shift = tm.gamma[lv - 1] - tm.gamma[0]
    return tm.gamma[0] + _scatter_float(Y.users, phi[Y.items] * shift[:, None], Y.n_users)


def _scatter_float(index, rows, n_rows):
    out = np.empty((n_rows, rows.shape[1]))
    for k in range(rows.shape[1]):
        out[:, k] = np.bincount(index, weights=rows[:, k], minlength=n_rows)
    return out


def sample_theta_from(shape, rate, rng, workers: int = 1) -> np.ndarray:
    parts = run_partitioned(rng, shape.shape[0],
                            lambda lo, hi, g: sample_gamma(shape[lo:hi], 1.0 / rate[lo:hi], g),
                            workers)
    return np.concatenate(parts, axis=0)


def sample_theta(counts: RatingCounts, edge_counts: EdgeCounts | None, state: OgfaState, rng,
                 workers: int = 1, exposure=1.0) -> np.ndarray:
    m = edge_counts.user_agg if edge_counts is not None else 0
    shape, rate = theta_conditional(counts.user_agg, m, state.theta, state.scales, state.c,
                                    state.hyper.r, exposure)
    return sample_theta_from(shape, rate, rng, workers)


def sample_rates(theta, shape_sum, hyper: Hyper, rng, workers: int = 1) -> np.ndarray:
    """c_u ~ Gam(e0 + sum_k shape_uk, 1/(f0 + sum_k theta_uk))."""
    shape = hyper.e0 + np.broadcast_to(shape_sum, theta.shape[:1])
    rate = hyper.f0 + theta.sum(axis=1)
    parts = run_partitioned(rng, theta.shape[0],
                            lambda lo, hi, g: sample_gamma(shape[lo:hi], 1.0 / rate[lo:hi], g),
                            workers)
    return np.concatenate(parts)


def gibbs_sweep(Y: OrdinalMatrix, A: AdjacencyGraph | None, state: OgfaState, stream: RngStream,
                workers: int = 1, edges=None, timer: dict | None = None) -> OgfaState:
    """One hybrid Gibbs-EM sweep; returns a new state, the input is untouched.

    ``A=None`` disables the social term entirely (scales stay at zero).
    ``timer`` collects per-phase wall-clock seconds.
    """
    if Y.shape != (state.theta.shape[0], state.phi.shape[0]):
        raise BadDimensions("rating matrix does not match the state")
    sweep = state.sweep + 1
    hyper = state.hyper
    K = state.K
    with timed(timer, "ratings"):
        rc = augment_ratings(Y, state.theta, state.phi, state.tm,
                             phase_stream(stream, P_RATINGS, sweep), workers)
    ec = None
    if A is not None:
        with timed(timer, "edges"):
            ec = sample_edge_counts(A, state.theta, state.scales,
                                    phase_stream(stream, P_EDGES, sweep), workers, edges)
    with timed(timer, "phi"):
        phi = sample_phi(rc.item_agg, hyper.eta, phase_stream(stream, P_PHI, sweep), workers)
    with timed(timer, "theta"):
        expo = rating_exposure(Y, state.phi, state.tm, hyper.exact_exposure)
        theta = sample_theta(rc, ec, state, phase_stream(stream, P_THETA, sweep), workers, expo)
    with timed(timer, "scales"):
        if ec is not None:
            scales = sample_community_scales(ec, theta, hyper.gamma0, hyper.c0,
                                             single_generator(phase_stream(stream, P_SCALES, sweep)))
        else:
            scales = state.scales.copy()
    c = state.c
    with timed(timer, "rates"):
        if hyper.resample_c:
            c = sample_rates(theta, hyper.r * K, hyper, phase_stream(stream, P_RATES, sweep), workers)
    with timed(timer, "thresholds"):
        tm = ordinal.em_update(rc.stats) if hyper.learn_thresholds else state.tm
    return OgfaState(theta, phi, scales, tm, c, hyper, sweep)


@dataclass
class Simulated:
    Y: OrdinalMatrix
    A: AdjacencyGraph
    theta: np.ndarray
    phi: np.ndarray
    scales: np.ndarray
    tm: ThresholdModel


def simulate_ratings(theta, phi, tm: ThresholdModel, rng, cells_per_block: int = 1 << 18) -> OrdinalMatrix:
    """Quantise lam_ui * eps_ui with eps ~ IG(1, 1) over every cell."""
    U, I = theta.shape[0], phi.shape[0]
    rows = max(1, cells_per_block // max(I, 1))
    triples = []
    for lo in range(0, U, rows):
        lam = theta[lo:lo + rows] @ phi.T
        eps = 1.0 / rng.standard_exponential(lam.shape)
        y = ordinal.quantize(lam * eps, tm)
        uu, ii = np.nonzero(y)
        triples.append(np.column_stack([uu + lo, ii, y[uu, ii]]))
    arr = np.concatenate(triples) if triples else np.zeros((0, 3), dtype=np.int64)
    return build_ordinal(arr, U, I, tm.V)


def simulate_graph(theta, scales, rng) -> AdjacencyGraph:
    """a_uv = 1(Pois(sum_k theta_uk s_k theta_vk) >= 1) over unordered pairs."""
    U = theta.shape[0]
    weighted = theta * scales
    edges = []
    for u in range(U - 1):
        rate = theta[u + 1:] @ weighted[u]
        hit = rng.poisson(rate) >= 1
        v = np.flatnonzero(hit) + u + 1
        edges.append(np.column_stack([np.full(v.size, u), v]))
    arr = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    return build_adjacency(arr, U)


def simulate(U: int, I: int, K: int, V: int, hyper: Hyper | None, true_deltas, rng) -> Simulated:
    """Forward draw of (Y, A) and the ground-truth factors."""
    hyper = hyper or Hyper()
    rng = single_generator(rng)
    tm = ordinal.from_deltas(true_deltas)
    if tm.V != V:
        raise BadDimensions("true_deltas must have V entries")
    theta = sample_gamma(hyper.r, 1.0 / hyper.c_init, rng, size=(U, K))
    phi = sample_dirichlet(np.full((I, K), hyper.eta), rng, axis=0)
    scales = sample_gamma(hyper.gamma0 / K, 1.0 / hyper.c0, rng, size=(K,))
    Y = simulate_ratings(theta, phi, tm, rng)
    A = simulate_graph(theta, scales, rng)
    return Simulated(Y, A, theta, phi, scales, tm)


def predict_scores(states, users=None, items=None) -> np.ndarray:
    """Posterior-mean rate sum_k theta_uk phi_ik averaged over ``states``.

    States may be ``OgfaState`` objects or ``(theta, phi)`` pairs.
    """
    states = list(states)
    if not states:
        raise EmptyStateList("need at least one state")
    total = None
    for st in states:
        theta, phi = (st.theta, st.phi) if hasattr(st, "theta") else st
        th = theta if users is None else theta[np.asarray(users)]
        ph = phi if items is None else phi[np.asarray(items)]
        s = th @ ph.T
        total = s if total is None else total + s
    return total / len(states)


def mean_rates(states, users, items) -> np.ndarray:
    """Posterior-mean lam for paired (users[j], items[j]) cells."""
    states = list(states)
    if not states:
        raise EmptyStateList("need at least one state")
    users, items = np.asarray(users), np.asarray(items)
    acc = np.zeros(users.shape[0])
    for st in states:
        theta, phi = (st.theta, st.phi) if hasattr(st, "theta") else st
        acc += np.sum(theta[users] * phi[items], axis=1)
    return acc / len(states)


def heldout_loglik(test, states, tm: ThresholdModel | None = None) -> float:
    """Sum of log pmf at the posterior-mean rate over test (user, item, level) rows.

    Thresholds default to those of the last state.
    """
    states = list(states)
    if not states:
        raise EmptyStateList("need at least one state")
    test = np.asarray(test, dtype=np.int64).reshape(-1, 3)
    if tm is None:
        tm = states[-1].tm
    lam = mean_rates(states, test[:, 0], test[:, 1])
    return float(np.sum(ordinal.log_lik(lam, test[:, 2], tm)))
