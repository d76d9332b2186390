"""Bernoulli-Poisson augmentation of social edges and community-scale updates.

Each unordered observed edge ``(u, v)`` carries one latent count
``m_uv ~ ZTP(sum_k theta_uk s_k theta_vk)`` thinned over communities; both
endpoints read the same thinned vector. Non-edges are implicitly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroRateEdge
from .parallel import run_partitioned
from .rng import multinomial_thin, sample_gamma, sample_ztp
from .sparse import AdjacencyGraph


@dataclass
class EdgeCounts:
    src: np.ndarray          # (E,) with src < dst
    dst: np.ndarray
    total: np.ndarray        # (E,) m_uv >= 1
    thinned: np.ndarray      # (E, K)
    user_agg: np.ndarray     # (U, K) m_uk. = sum over neighbours
    community_tot: np.ndarray  # (K,) m_.k. over unordered pairs

    @classmethod
    def empty(cls, n_users: int, K: int) -> "EdgeCounts":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros((0, K), dtype=np.int64),
                   np.zeros((n_users, K), dtype=np.int64), np.zeros(K, dtype=np.int64))

    def recompute_aggregates(self, n_users: int) -> tuple[np.ndarray, np.ndarray]:
        K = self.thinned.shape[1]
        agg = np.zeros((n_users, K), dtype=np.int64)
        np.add.at(agg, self.src, self.thinned)
        np.add.at(agg, self.dst, self.thinned)
        return agg, self.thinned.sum(axis=0)


def edge_rate(u: int, v: int, theta: np.ndarray, scales: np.ndarray) -> float:
    return float(np.sum(theta[u] * scales * theta[v]))


def edge_rates(src, dst, theta, scales) -> np.ndarray:
    """Vectorised ``edge_rate`` over edge arrays; returns the (E, K) terms."""
    return theta[src] * scales * theta[dst]


def _underflow_weights(src, dst, theta, scales) -> np.ndarray:
    """Relative community weights of edges whose rate underflowed to 0.

    A ZTP count tends to 1 as its rate goes to 0, so such edges carry a single
    latent count split by weights computed in log space. Truly zero factors
    mean the state is corrupt.
    """
    with np.errstate(divide="ignore"):
        logw = np.log(theta[src]) + np.log(scales) + np.log(theta[dst])
    if np.any(~np.isfinite(logw.max(axis=1))) or np.any(np.isnan(logw)):
        raise ZeroRateEdge("observed edge has zero Poisson rate")
    return np.exp(logw - logw.max(axis=1, keepdims=True))


def pair_exposure(theta: np.ndarray) -> np.ndarray:
    """sum_{u<v} theta_uk theta_vk for every k in O(U K)."""
    col = theta.sum(axis=0)
    return 0.5 * (col * col - np.sum(theta * theta, axis=0))


def sample_edge_counts(graph: AdjacencyGraph, theta, scales, rng, workers: int = 1,
                       edges=None) -> EdgeCounts:
    """Augment every observed edge.

    ``rng`` is a Generator or an ``RngStream`` (partitioned over edges);
    ``edges`` may pass precomputed ``(src, dst)`` arrays.
    """
    U, K = theta.shape
    src, dst = graph.edge_pairs() if edges is None else edges
    if src.size == 0:
        return EdgeCounts.empty(U, K)

    def part(lo, hi, gen):
        s, d = src[lo:hi], dst[lo:hi]
        terms = edge_rates(s, d, theta, scales)
        rate = terms.sum(axis=1)
        low = ~(rate > 0)
        if np.any(low):
            terms[low] = _underflow_weights(s[low], d[low], theta, scales)
            rate = np.where(low, 0.0, rate)
        total = np.where(low, 1, sample_ztp(np.where(low, 1.0, rate), gen)).astype(np.int64)
        return total, multinomial_thin(total, terms, gen)

    parts = run_partitioned(rng, src.size, part, workers)
    total = np.concatenate([p[0] for p in parts])
    thinned = np.concatenate([p[1] for p in parts])
    agg = np.zeros((U, K), dtype=np.int64)
    np.add.at(agg, src, thinned)
    np.add.at(agg, dst, thinned)
    return EdgeCounts(src, dst, total, thinned, agg, thinned.sum(axis=0))


def community_scale_posterior(community_tot, theta, gamma0: float, c0: float):
    """Shape and rate of every u_k conditional."""
    K = theta.shape[1]
    shape = gamma0 / K + np.asarray(community_tot, dtype=np.float64)
    rate = c0 + pair_exposure(theta)
    return shape, rate


def sample_community_scale(k: int, counts: EdgeCounts, theta, gamma0: float, c0: float, rng) -> float:
    shape, rate = community_scale_posterior(counts.community_tot, theta, gamma0, c0)
    return float(sample_gamma(shape[k], 1.0 / rate[k], rng))


def sample_community_scales(counts: EdgeCounts, theta, gamma0: float, c0: float, rng) -> np.ndarray:
    shape, rate = community_scale_posterior(counts.community_tot, theta, gamma0, c0)
    return sample_gamma(shape, 1.0 / rate, rng)


def graph_exposure(theta: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """u_k * sum_{v != u} theta_vk for every (u, k)."""
    return scales * (theta.sum(axis=0) - theta)
