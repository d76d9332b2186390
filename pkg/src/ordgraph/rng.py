"""Seeded random streams and the samplers used by the Gibbs sweeps.

A stream is addressed by a master seed plus an integer tag
``(phase, partition, sweep)``; the tag is hashed into numpy's
``SeedSequence`` spawn key so any partition of any phase can be regenerated
independently of thread scheduling.

All samplers are vectorised: scalars in, scalar out; arrays in, arrays out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, polygamma

from .errors import AllZeroWeights, NonPositiveParameter

_TINY = np.finfo(np.float64).tiny

# ZTP switches from inversion to rejection at this rate.
ZTP_INVERSION_MAX = 5.0
# CRT switches to a normal approximation above this many customers.
CRT_EXACT_MAX = 10_000


@dataclass(frozen=True)
class RngStream:
    seed: int
    tag: tuple[int, ...] = ()

    def child(self, *tag: int) -> "RngStream":
        return RngStream(self.seed, self.tag + tuple(int(t) for t in tag))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=self.tag)
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int, *tag: int) -> np.random.Generator:
    return RngStream(seed, tuple(tag)).generator()


def _scalarize(x, like):
    return x.item() if np.ndim(like) == 0 and np.ndim(x) == 0 else x


def sample_gamma(shape, scale, rng: np.random.Generator, size=None):
    """Gamma(shape, scale) draws.

    Shapes below one are boosted: ``G(a) = G(a + 1) * U**(1/a)``, evaluated in
    log space and clamped to the smallest normal double so draws stay strictly
    positive even for shape ~ 1e-3.
    """
    shape = np.asarray(shape, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(~(shape > 0)) or np.any(~(scale > 0)):
        raise NonPositiveParameter("gamma shape and scale must be > 0")
    if size is None:
        size = np.broadcast_shapes(shape.shape, scale.shape)
    shape_b = np.broadcast_to(shape, size)
    small = shape_b < 1.0
    g = rng.standard_gamma(np.where(small, shape_b + 1.0, shape_b), size=size)
    if np.any(small):
        u = 1.0 - rng.random(size=size)
        boost = np.exp(np.log(u) / shape_b)
        g = np.where(small, g * boost, g)
    out = np.maximum(g * scale, _TINY)
    return _scalarize(out, out)


def sample_dirichlet(alphas, rng: np.random.Generator, axis: int = -1):
    """Dirichlet draw(s); the simplex runs along ``axis``."""
    alphas = np.asarray(alphas, dtype=np.float64)
    if np.any(~(alphas > 0)):
        raise NonPositiveParameter("dirichlet concentrations must be > 0")
    if alphas.shape[axis] == 1:
        return np.ones_like(alphas)
    g = sample_gamma(alphas, 1.0, rng)
    return g / g.sum(axis=axis, keepdims=True)


def _ztp_inversion(rate: np.ndarray, u: np.ndarray) -> np.ndarray:
    # P(N = k | N >= 1) = e^-rate rate^k / (k! (1 - e^-rate)); start at k = 1.
    norm = -np.expm1(-rate)
    p = np.exp(-rate) * rate / norm
    target = u
    cum = p.copy()
    out = np.ones(rate.shape, dtype=np.int64)
    active = cum < target
    k = 1
    while np.any(active):
        k += 1
        idx = np.flatnonzero(active)
        p_idx = p[idx] * rate[idx] / k
        p[idx] = p_idx
        cum[idx] += p_idx
        out[idx] = k
        still = cum[idx] < target[idx]
        # guard against round-off leaving cum a hair below u forever
        still &= p_idx > 0
        active[idx] = still
    return out


def sample_ztp(rate, rng: np.random.Generator):
    """Zero-truncated Poisson draw(s), support {1, 2, ...}.

    Inversion below ``ZTP_INVERSION_MAX``; rejection from the untruncated
    Poisson above (acceptance probability > 0.99 there).
    """
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(~(rate > 0)) or np.any(~np.isfinite(rate)):
        raise NonPositiveParameter("ZTP rate must be positive and finite")
    flat = rate.reshape(-1)
    out = np.empty(flat.shape, dtype=np.int64)
    small = flat < ZTP_INVERSION_MAX
    if np.any(small):
        r = flat[small]
        out[small] = _ztp_inversion(r, rng.random(r.shape))
    if not np.all(small):
        idx = np.flatnonzero(~small)
        draws = rng.poisson(flat[idx])
        bad = draws == 0
        while np.any(bad):
            draws[bad] = rng.poisson(flat[idx][bad])
            bad = draws == 0
        out[idx] = draws
    out = out.reshape(rate.shape)
    return _scalarize(out, rate)


def sample_crt(n, concentration, rng: np.random.Generator):
    """Chinese-restaurant table count: sum_{i=1..n} Bernoulli(r / (r + i - 1))."""
    n = np.asarray(n, dtype=np.int64)
    r = np.asarray(concentration, dtype=np.float64)
    if np.any(~(r > 0)):
        raise NonPositiveParameter("CRT concentration must be > 0")
    if np.any(n < 0):
        raise NonPositiveParameter("CRT customer count must be >= 0")
    shape = np.broadcast_shapes(n.shape, r.shape)
    n_f = np.broadcast_to(n, shape).reshape(-1)
    r_f = np.broadcast_to(r, shape).reshape(-1)
    out = np.zeros(n_f.shape, dtype=np.int64)
    exact = n_f <= CRT_EXACT_MAX
    idx = np.flatnonzero(exact & (n_f > 0))
    if idx.size:
        nn, rr = n_f[idx], r_f[idx]
        tables = np.ones(idx.size, dtype=np.int64)  # first customer always opens one
        order = np.argsort(-nn, kind="stable")
        nn, rr = nn[order], rr[order]
        top = int(nn[0])
        for i in range(2, top + 1):
            m = int(np.searchsorted(-nn, -i, side="right"))
            tables[:m] += rng.random(m) < rr[:m] / (rr[:m] + i - 1)
        res = np.empty_like(tables)
        res[order] = tables
        out[idx] = res
    big = np.flatnonzero(~exact)
    if big.size:
        nn, rr = n_f[big].astype(np.float64), r_f[big]
        mean = rr * (digamma(rr + nn) - digamma(rr))
        var = mean - rr**2 * (polygamma(1, rr) - polygamma(1, rr + nn))
        draw = np.floor(rng.normal(mean, np.sqrt(np.maximum(var, 0.0))) + 0.5)
        out[big] = np.clip(draw, 1, nn).astype(np.int64)
    out = out.reshape(shape)
    return _scalarize(out, np.empty(shape))


def multinomial_thin(n, weights, rng: np.random.Generator):
    """Split count(s) ``n`` across categories proportional to ``weights``.

    ``weights`` may be a vector (scalar ``n``) or an (m, K) matrix with one
    row per entry of ``n``. Output rows sum exactly to ``n``.
    """
    w = np.asarray(weights, dtype=np.float64)
    n_arr = np.asarray(n, dtype=np.int64)
    if np.any(w < 0):
        raise AllZeroWeights("weights must be nonnegative")
    tot = w.sum(axis=-1, keepdims=True)
    if np.any(~(tot > 0)):
        raise AllZeroWeights("weights must have a positive sum")
    if np.any(n_arr < 0):
        raise ValueError("counts must be >= 0")
    if w.shape[-1] == 1:
        return np.broadcast_to(n_arr[..., None], n_arr.shape + (1,)).copy()
    return rng.multinomial(n_arr, w / tot)
