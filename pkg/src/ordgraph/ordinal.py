"""Cumulative link for ordinal levels under multiplicative IG(1, 1) noise.

With inverse thresholds ``gamma_0 > ... > gamma_{V-1} > gamma_V = 0`` the
level cdf is ``P(y <= v | lam) = exp(-lam * gamma_v)``.  The gaps
``delta_v = gamma_{v-1} - gamma_v`` are the free parameters; they are
re-estimated in closed form from augmented counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDenominator, LevelOutOfRange, NonPositiveDelta
from .rng import sample_ztp

DELTA_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ThresholdModel:
    delta: np.ndarray
    gamma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        delta = np.array(self.delta, dtype=np.float64).reshape(-1)
        if delta.size == 0:
            raise NonPositiveDelta("need at least one level")
        if np.any(~(delta > 0)):
            raise NonPositiveDelta("all threshold gaps must be > 0")
        # gamma_v = sum_{l > v} delta_l, gamma_V = 0
        gamma = np.append(np.cumsum(delta[::-1])[::-1], 0.0)
        delta.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def V(self) -> int:
        return int(self.delta.shape[0])

    @property
    def boundaries(self) -> np.ndarray:
        """b_v = 1 / gamma_v for v = 0..V (b_V = inf)."""
        with np.errstate(divide="ignore"):
            return 1.0 / self.gamma

    def __eq__(self, other):
        return isinstance(other, ThresholdModel) and np.array_equal(self.delta, other.delta)

    def to_json(self) -> str:
        return json.dumps([float(d) for d in self.delta])

    @classmethod
    def from_json(cls, text: str) -> "ThresholdModel":
        return cls(np.array(json.loads(text), dtype=np.float64))


def from_deltas(delta) -> ThresholdModel:
    return ThresholdModel(np.asarray(delta, dtype=np.float64))


def uniform_thresholds(V: int) -> ThresholdModel:
    return ThresholdModel(np.full(V, 1.0 / V))


def _check_levels(v, V):
    v = np.asarray(v)
    if np.any(v < 0) or np.any(v > V):
        raise LevelOutOfRange(f"level must lie in 0..{V}")
    return v.astype(np.int64)


def cdf(lam, v, tm: ThresholdModel):
    v = _check_levels(v, tm.V)
    out = np.exp(-np.asarray(lam, dtype=np.float64) * tm.gamma[v])
    return out.item() if out.ndim == 0 else out


def pmf(lam, v, tm: ThresholdModel):
    lam = np.asarray(lam, dtype=np.float64)
    v = _check_levels(v, tm.V)
    lam, v = np.broadcast_arrays(lam, v)
    vp = np.maximum(v, 1)
    pos = np.exp(-lam * tm.gamma[vp]) * -np.expm1(-lam * tm.delta[vp - 1])
    out = np.where(v == 0, np.exp(-lam * tm.gamma[0]), pos)
    return out.item() if out.ndim == 0 else out


def log_lik(lam, v, tm: ThresholdModel):
    lam = np.asarray(lam, dtype=np.float64)
    v = _check_levels(v, tm.V)
    lam, v = np.broadcast_arrays(lam, v)
    vp = np.maximum(v, 1)
    with np.errstate(divide="ignore"):
        pos = -lam * tm.gamma[vp] + np.log(-np.expm1(-lam * tm.delta[vp - 1]))
    out = np.where(v == 0, -lam * tm.gamma[0], pos)
    return out.item() if out.ndim == 0 else out


def quantize(x, tm: ThresholdModel):
    """Level v with b_{v-1} <= x < b_v, i.e. x * gamma_v < 1 <= x * gamma_{v-1}."""
    x = np.asarray(x, dtype=np.float64)
    out = np.sum(x[..., None] * tm.gamma >= 1.0, axis=-1)
    return out.item() if out.ndim == 0 else out


def sample_latent_count(y, lam, tm: ThresholdModel, rng):
    """Augmented count: 0 for y = 0, ZTP(lam * delta_y) otherwise."""
    y = _check_levels(y, tm.V)
    lam = np.asarray(lam, dtype=np.float64)
    y, lam = np.broadcast_arrays(y, lam)
    out = np.zeros(y.shape, dtype=np.int64)
    pos = y > 0
    if np.any(pos):
        out[pos] = sample_ztp(lam[pos] * tm.delta[y[pos] - 1], rng)
    return out.item() if out.ndim == 0 else out


@dataclass
class ThresholdStats:
    """Sufficient statistics of the EM threshold step.

    ``num[l-1] = sum 1[y = l] n``; ``den[l-1] = sum 1[y <= l] lam`` over all
    cells, zeros included.
    """

    num: np.ndarray
    den: np.ndarray

    def __add__(self, other: "ThresholdStats") -> "ThresholdStats":
        return ThresholdStats(self.num + other.num, self.den + other.den)

    @classmethod
    def zeros(cls, V: int) -> "ThresholdStats":
        return cls(np.zeros(V), np.zeros(V))


def accumulate_stats(levels, counts, lam, V: int, zero_lambda_total: float = 0.0) -> ThresholdStats:
    """Statistics from explicit cells plus the summed rate of implicit zero cells."""
    levels = np.asarray(levels, dtype=np.int64)
    num = np.bincount(levels, weights=np.asarray(counts, dtype=np.float64), minlength=V + 1)
    lam_by_level = np.bincount(levels, weights=np.asarray(lam, dtype=np.float64), minlength=V + 1)
    lam_by_level[0] += zero_lambda_total
    return ThresholdStats(num[1:V + 1].copy(), np.cumsum(lam_by_level)[1:V + 1])


def em_objective(delta, stats: ThresholdStats) -> float:
    delta = np.asarray(delta, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(stats.num > 0, stats.num * np.log(delta), 0.0)
    return float(np.sum(terms - stats.den * delta))


def em_update(stats: ThresholdStats, floor: float = DELTA_FLOOR) -> ThresholdModel:
    if np.any(~(stats.den > 0)):
        raise EmptyDenominator("EM denominator is zero for some level")
    return ThresholdModel(np.maximum(stats.num / stats.den, floor))
