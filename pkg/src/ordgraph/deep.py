"""Multi-layer gamma belief network over user preferences with per-layer graphs.

Layer t holds ``theta^(t)`` (U x K_t), a community-scale vector ``s^(t)`` and
its own social graph ``A^(t)``, the binarised t-th power of ``A``. Ratings
attach to layer 1 only; deeper layers enter as gamma shapes::

    theta^(t)_u ~ Gam(Phi^(t+1) theta^(t+1)_u, 1/c^(t+1)_u),  t < T
    theta^(T)_u ~ Gam(r, 1/c^(T+1)_u)

Inference runs an upward pass (augment ratings and edges, then CRT tables
carry counts from layer t to t+1) followed by a downward pass of conjugate
gamma/Dirichlet draws. The exposure of layer t+1 is
``sum_k phi^(t+1)_{k k'} log(1 + a^(t)_uk / c^(t+1)_u)`` plus its graph term.

With T = 1 every phase, and every stream tag, coincides with ``ogfa``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ordinal
from .errors import BadDimensions, IndexOutOfRange
from .graphlink import EdgeCounts, graph_exposure, sample_community_scales, sample_edge_counts
from .ogfa import (
    P_CRT,
    P_EDGES,
    P_PHI,
    P_RATES,
    P_RATINGS,
    P_SCALES,
    P_THETA,
    P_THIN,
    Hyper,
    OgfaState,
    RatingCounts,
    augment_ratings,
    rating_exposure,
    phase_stream,
    sample_phi,
    sample_rates,
    sample_theta_from,
    theta_conditional,
)
from .ordinal import ThresholdModel
from .parallel import run_partitioned, single_generator, timed
from .rng import RngStream, multinomial_thin, sample_crt, sample_dirichlet, sample_gamma
from .sparse import AdjacencyGraph, OrdinalMatrix, adjacency_power


@dataclass
class DeepState:
    thetas: list[np.ndarray]   # layer t -> (U, K_t)
    phis: list[np.ndarray]     # layer 1 -> (I, K_1); layer t >= 2 -> (K_{t-1}, K_t)
    scales: list[np.ndarray]   # layer t -> (K_t,)
    rates: list[np.ndarray]    # layer t -> (U,), the gamma rate of theta^(t)
    tm: ThresholdModel
    hyper: Hyper = field(default_factory=Hyper)
    sweep: int = 0

    @property
    def T(self) -> int:
        return len(self.thetas)

    @property
    def widths(self) -> list[int]:
        return [th.shape[1] for th in self.thetas]

    # layer-1 views so rating-level helpers (scores, likelihood) accept a DeepState
    @property
    def theta(self) -> np.ndarray:
        return self.thetas[0]

    @property
    def phi(self) -> np.ndarray:
        return self.phis[0]

    def copy(self) -> "DeepState":
        return replace(
            self,
            thetas=[a.copy() for a in self.thetas],
            phis=[a.copy() for a in self.phis],
            scales=[a.copy() for a in self.scales],
            rates=[a.copy() for a in self.rates],
        )

    def to_ogfa(self) -> OgfaState:
        if self.T != 1:
            raise BadDimensions("only a one-layer network maps onto the shallow model")
        return OgfaState(self.thetas[0], self.phis[0], self.scales[0], self.tm, self.rates[0],
                         self.hyper, self.sweep)

    @classmethod
    def from_ogfa(cls, state: OgfaState) -> "DeepState":
        return cls([state.theta], [state.phi], [state.scales], [state.c], state.tm,
                   state.hyper, state.sweep)


@dataclass
class LayerCounts:
    ratings: RatingCounts
    edges: list            # layer t -> EdgeCounts or None
    x: list                # layer t -> (U, K_t) counts attached to theta^(t)
    exposure: list         # layer t -> (U, K_t) Poisson exposure a^(t)
    tables: list           # layer t < T -> (U, K_t) CRT tables
    tables_by_user: list   # layer t < T -> (U, K_{t+1}) sum_k l_{u,k,k'}
    tables_by_comm: list   # layer t < T -> (K_t, K_{t+1}) sum_u l_{u,k,k'}
    rating_exposure: object = 1.0


def build_layer_graphs(A: AdjacencyGraph | None, T: int) -> list:
    if A is None:
        return [None] * T
    graphs = [A]
    for t in range(2, T + 1):
        graphs.append(adjacency_power(A, t))
    return graphs


def init_deep(U: int, I: int, widths, V: int, hyper: Hyper | None = None, rng=None,
              graph: bool = True) -> DeepState:
    """Ancestral draw from the priors, top layer first."""
    hyper = hyper or Hyper()
    widths = [int(k) for k in widths]
    if min([U, I, V] + widths) < 1 or not widths:
        raise BadDimensions("dimensions and layer widths must be >= 1")
    hyper.validate()
    rng = single_generator(rng if rng is not None else RngStream(0))
    T = len(widths)
    rates = [np.full(U, float(hyper.c_init)) for _ in range(T)]
    thetas: list = [None] * T
    phis: list = [None] * T
    thetas[T - 1] = sample_gamma(hyper.r, 1.0 / rates[T - 1][:, None], rng, size=(U, widths[-1]))
    for t in range(T - 2, -1, -1):
        phis[t + 1] = sample_dirichlet(np.full((widths[t], widths[t + 1]), hyper.eta), rng, axis=0)
        shape = thetas[t + 1] @ phis[t + 1].T
        thetas[t] = sample_gamma(shape, 1.0 / rates[t][:, None], rng)
    phis[0] = sample_dirichlet(np.full((I, widths[0]), hyper.eta), rng, axis=0)
    if graph:
        scales = [sample_gamma(hyper.gamma0 / k, 1.0 / hyper.c0, rng, size=(k,)) for k in widths]
    else:
        scales = [np.zeros(k) for k in widths]
    return DeepState(thetas, phis, scales, rates, ordinal.uniform_thresholds(V), hyper, 0)


def _prior_shape(state_thetas, state_phis, t: int, hyper: Hyper):
    """Gamma shape of theta^(t) (0-based layer index)."""
    if t == len(state_thetas) - 1:
        return hyper.r
    return state_thetas[t + 1] @ state_phis[t + 1].T


def upward_pass(Y: OrdinalMatrix, graphs, state: DeepState, stream: RngStream, sweep: int,
                workers: int = 1) -> LayerCounts:
    T = state.T
    U = state.thetas[0].shape[0]
    rc = augment_ratings(Y, state.thetas[0], state.phis[0], state.tm,
                         phase_stream(stream, P_RATINGS, sweep, 1), workers)
    edges = [None] * T
    x = [None] * T
    exposure = [None] * T
    tables, by_user, by_comm = [], [], []
    if graphs[0] is not None:
        edges[0] = sample_edge_counts(graphs[0], state.thetas[0], state.scales[0],
                                      phase_stream(stream, P_EDGES, sweep, 1), workers)
    x[0] = rc.user_agg + (edges[0].user_agg if edges[0] is not None else 0)
    expo1 = rating_exposure(Y, state.phis[0], state.tm, state.hyper.exact_exposure)
    exposure[0] = expo1 + graph_exposure(state.thetas[0], state.scales[0])
    for t in range(T - 1):
        layer = t + 1
        theta_up, phi_up = state.thetas[t + 1], state.phis[t + 1]
        shape_up = theta_up @ phi_up.T
        xt = x[t]
        tab = np.concatenate(run_partitioned(
            phase_stream(stream, P_CRT, sweep, layer), U,
            lambda lo, hi, g: np.asarray(sample_crt(xt[lo:hi], shape_up[lo:hi], g)).reshape(hi - lo, -1),
            workers))
        uu, kk = np.nonzero(tab)
        counts = tab[uu, kk]

        def thin(lo, hi, g):
            w = phi_up[kk[lo:hi]] * theta_up[uu[lo:hi]]
            return multinomial_thin(counts[lo:hi], w, g)

        K_next = theta_up.shape[1]
        parts = run_partitioned(phase_stream(stream, P_THIN, sweep, layer), counts.size, thin, workers)
        split = np.concatenate(parts) if parts else np.zeros((0, K_next), dtype=np.int64)
        from_below = np.zeros((U, K_next), dtype=np.int64)
        np.add.at(from_below, uu, split)
        comm = np.zeros((xt.shape[1], K_next), dtype=np.int64)
        np.add.at(comm, kk, split)
        tables.append(tab)
        by_user.append(from_below)
        by_comm.append(comm)
        if graphs[t + 1] is not None:
            edges[t + 1] = sample_edge_counts(graphs[t + 1], theta_up, state.scales[t + 1],
                                              phase_stream(stream, P_EDGES, sweep, layer + 1), workers)
        x[t + 1] = from_below + (edges[t + 1].user_agg if edges[t + 1] is not None else 0)
        q = np.log1p(exposure[t] / state.rates[t][:, None]) @ phi_up
        exposure[t + 1] = q + graph_exposure(theta_up, state.scales[t + 1])
    return LayerCounts(rc, edges, x, exposure, tables, by_user, by_comm, expo1)


def downward_pass(counts: LayerCounts, state: DeepState, stream: RngStream, sweep: int,
                  workers: int = 1):
    """Fresh (thetas, phis, scales) drawn from layer T down to layer 1."""
    T = state.T
    hyper = state.hyper
    thetas = list(state.thetas)
    phis = list(state.phis)
    scales = list(state.scales)
    for t in range(T - 1, -1, -1):
        layer = t + 1
        prior = _prior_shape(thetas, phis, t, hyper)
        ec: EdgeCounts | None = counts.edges[t]
        if t == 0:
            shape, rate = theta_conditional(counts.ratings.user_agg,
                                            ec.user_agg if ec is not None else 0,
                                            state.thetas[0], state.scales[0], state.rates[0], prior,
                                            counts.rating_exposure)
        else:
            shape = prior + counts.x[t]
            rate = state.rates[t][:, None] + counts.exposure[t]
        thetas[t] = sample_theta_from(shape, rate, phase_stream(stream, P_THETA, sweep, layer), workers)
        if ec is not None:
            scales[t] = sample_community_scales(
                ec, thetas[t], hyper.gamma0, hyper.c0,
                single_generator(phase_stream(stream, P_SCALES, sweep, layer)))
        if t == 0:
            phis[0] = sample_phi(counts.ratings.item_agg, hyper.eta,
                                 phase_stream(stream, P_PHI, sweep, layer), workers)
        else:
            phis[t] = sample_phi(counts.tables_by_comm[t - 1], hyper.eta,
                                 phase_stream(stream, P_PHI, sweep, layer), workers)
    return thetas, phis, scales


def deep_sweep(Y: OrdinalMatrix, graphs, state: DeepState, stream: RngStream,
               workers: int = 1, timer: dict | None = None) -> DeepState:
    """Upward pass, downward pass, rate hyperparameters, then the EM threshold step."""
    if len(graphs) != state.T:
        raise BadDimensions("need one graph (or None) per layer")
    if Y.shape != (state.thetas[0].shape[0], state.phis[0].shape[0]):
        raise BadDimensions("rating matrix does not match the state")
    sweep = state.sweep + 1
    hyper = state.hyper
    with timed(timer, "upward"):
        counts = upward_pass(Y, graphs, state, stream, sweep, workers)
    with timed(timer, "downward"):
        thetas, phis, scales = downward_pass(counts, state, stream, sweep, workers)
    rates = list(state.rates)
    with timed(timer, "rates"):
        if hyper.resample_c:
            for t in range(state.T):
                if t == state.T - 1:
                    shape_sum = hyper.r * thetas[t].shape[1]
                else:
                    shape_sum = (thetas[t + 1] @ phis[t + 1].T).sum(axis=1)
                rates[t] = sample_rates(thetas[t], shape_sum, hyper,
                                        phase_stream(stream, P_RATES, sweep, t + 1), workers)
    with timed(timer, "thresholds"):
        tm = ordinal.em_update(counts.ratings.stats) if hyper.learn_thresholds else state.tm
    return DeepState(thetas, phis, scales, rates, tm, hyper, sweep)


def project_community(state: DeepState, layer: int, k: int) -> np.ndarray:
    """Item-space loading of community ``k`` at ``layer``: Phi^(1) ... Phi^(l-1) phi^(l)_k."""
    if not 1 <= layer <= state.T:
        raise IndexOutOfRange(f"layer must lie in 1..{state.T}")
    if not 0 <= k < state.phis[layer - 1].shape[1]:
        raise IndexOutOfRange(f"community index {k} out of range at layer {layer}")
    return project_phis(state.phis, layer, k)


def project_phis(phis, layer: int, k: int) -> np.ndarray:
    v = phis[layer - 1][:, k]
    for t in range(layer - 2, -1, -1):
        v = phis[t] @ v
    return v
