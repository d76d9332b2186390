"""Ordinal rating and social-graph factor models with Gibbs-EM inference."""

from .errors import OrdGraphError
from .ogfa import Hyper, OgfaState, gibbs_sweep, init_state, simulate
from .deep import DeepState, deep_sweep, init_deep
from .ordinal import ThresholdModel, from_deltas, uniform_thresholds
from .sparse import AdjacencyGraph, OrdinalMatrix, build_adjacency, build_ordinal

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph", "DeepState", "Hyper", "OgfaState", "OrdGraphError", "OrdinalMatrix",
    "ThresholdModel", "build_adjacency", "build_ordinal", "deep_sweep", "from_deltas",
    "gibbs_sweep", "init_deep", "init_state", "simulate", "uniform_thresholds",
]
