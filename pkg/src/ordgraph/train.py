"""Sampling driver shared by both model kinds."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import ordinal
from .deep import DeepState, build_layer_graphs, deep_sweep, init_deep
from .errors import ConfigError
from .ogfa import Hyper, OgfaState, gibbs_sweep, heldout_loglik, init_state
from .rng import RngStream
from .sparse import AdjacencyGraph, OrdinalMatrix

log = logging.getLogger(__name__)

# child tags of the run seed
INIT_TAG = 0
SWEEP_TAG = 1


@dataclass
class FitResult:
    state: object                       # final OgfaState or DeepState
    collected: list                     # layer-1 (theta, phi) pairs
    phi_means: list                     # running mean of Phi^(t) over collected sweeps
    loglik: list = field(default_factory=list)   # (sweep, held-out log-likelihood)
    timings: list = field(default_factory=list)  # (sweep, {phase: seconds})
    deltas: list = field(default_factory=list)   # (sweep, delta vector)


def collect_sweeps(burn_in: int, collect: int, stride: int) -> list[int]:
    """Sweep numbers (1-based) whose layer-1 factors are kept."""
    return [burn_in + stride * (j + 1) for j in range(collect)]


def initial_state(kind: str, Y: OrdinalMatrix, widths, hyper: Hyper, seed: int,
                  graph: bool, threshold_init=None):
    rng = RngStream(seed).child(INIT_TAG)
    U, I, V = Y.n_users, Y.n_items, Y.max_level
    if kind == "ogfa":
        if len(widths) != 1:
            raise ConfigError("ogfa takes a single width K")
        state = init_state(U, I, widths[0], V, hyper, rng, graph=graph)
    elif kind == "oggbn":
        state = init_deep(U, I, widths, V, hyper, rng, graph=graph)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    if threshold_init is not None:
        tm = ordinal.from_deltas(threshold_init)
        if tm.V != V:
            raise ConfigError(f"threshold init has {tm.V} gaps, data has V={V}")
        state.tm = tm
    return state


def fit(Y: OrdinalMatrix, A: AdjacencyGraph | None, kind: str = "ogfa", widths=(100,),
        hyper: Hyper | None = None, burn_in: int = 500, collect: int = 50, stride: int = 5,
        seed: int = 0, workers: int = 1, validation=None, threshold_init=None,
        log_every: int = 0) -> FitResult:
    """Run ``burn_in + collect * stride`` sweeps and gather posterior samples.

    ``validation`` is an optional (n, 3) array of held-out (user, item, level)
    rows; when given, its log-likelihood under the current state is recorded
    after every sweep.
    """
    hyper = hyper or Hyper()
    hyper.validate()
    widths = [int(k) for k in widths]
    state = initial_state(kind, Y, widths, hyper, seed, A is not None, threshold_init)
    stream = RngStream(seed).child(SWEEP_TAG)
    graphs = build_layer_graphs(A, len(widths)) if kind == "oggbn" else None
    keep = set(collect_sweeps(burn_in, collect, stride))
    total = burn_in + collect * stride
    collected = []
    phi_sums = None
    result = FitResult(state, collected, [])
    for _ in range(total):
        timer: dict = {}
        if kind == "ogfa":
            state = gibbs_sweep(Y, A, state, stream, workers, timer=timer)
        else:
            state = deep_sweep(Y, graphs, state, stream, workers, timer=timer)
        sweep = state.sweep
        result.timings.append((sweep, timer))
        result.deltas.append((sweep, state.tm.delta.tolist()))
        if validation is not None and len(validation):
            result.loglik.append((sweep, heldout_loglik(validation, [state])))
        if sweep in keep:
            collected.append((state.theta.copy(), state.phi.copy()))
            phis = _phis(state)
            if phi_sums is None:
                phi_sums = [p.copy() for p in phis]
            else:
                for acc, p in zip(phi_sums, phis):
                    acc += p
        if log_every and sweep % log_every == 0:
            log.info("sweep %d/%d", sweep, total)
    if phi_sums is None:
        result.phi_means = [p.copy() for p in _phis(state)]
    else:
        result.phi_means = [p / len(collected) for p in phi_sums]
    result.state = state
    return result


def _phis(state) -> list:
    if isinstance(state, DeepState):
        return state.phis
    return [state.phi]


def write_train_log(path, result: FitResult) -> None:
    """Per-sweep held-out log-likelihood and threshold gaps."""
    ll = dict(result.loglik)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        V = len(result.deltas[0][1]) if result.deltas else 0
        w.writerow(["sweep", "heldout_loglik"] + [f"delta_{v}" for v in range(1, V + 1)])
        for sweep, delta in result.deltas:
            value = repr(ll[sweep]) if sweep in ll else ""
            w.writerow([sweep, value] + [repr(float(d)) for d in delta])


def write_timing_log(path, result: FitResult) -> None:
    """Wall-clock seconds per sweep phase; kept apart from reproducible outputs."""
    phases: list[str] = []
    for _, t in result.timings:
        for name in t:
            if name not in phases:
                phases.append(name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep"] + phases + ["total"])
        for sweep, t in result.timings:
            vals = [t.get(p, 0.0) for p in phases]
            w.writerow([sweep] + [f"{v:.6f}" for v in vals] + [f"{sum(vals):.6f}"])


def as_deltas(text: str, V: int):
    """Parse a threshold-init setting: ``uniform`` or comma-separated gaps."""
    if text == "uniform":
        return None
    gaps = np.array([float(x) for x in text.split(",") if x.strip()])
    if gaps.size != V or np.any(gaps <= 0):
        raise ConfigError("threshold init needs V positive gaps")
    return gaps
