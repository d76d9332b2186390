"""Community taxonomy: every layer's communities projected to item space, linked top-down."""

from __future__ import annotations

import json

import numpy as np

from .deep import project_phis
from .errors import ConfigError

PENWIDTH_SCALE = 8.0


def node_id(layer: int, k: int) -> str:
    return f"L{layer}_C{k}"


def build_tree(phis, item_names=None, top_items: int = 10, tau: float = 0.05) -> dict:
    """Nodes carry their top items; edge (t+1, k') -> (t, k) weighs Phi^(t+1)[k, k'].

    ``phis[0]`` is the I x K_1 item loading, ``phis[t]`` is K_t x K_{t+1}.
    Edges lighter than ``tau`` are dropped.
    """
    if top_items < 1:
        raise ConfigError("top_items must be >= 1")
    if tau < 0:
        raise ConfigError("tau must be >= 0")
    phis = [np.asarray(p, dtype=np.float64) for p in phis]
    n_items = phis[0].shape[0]
    names = list(item_names) if item_names is not None else [str(i) for i in range(n_items)]
    nodes, edges = [], []
    for layer in range(1, len(phis) + 1):
        for k in range(phis[layer - 1].shape[1]):
            w = project_phis(phis, layer, k)
            order = np.argsort(-w, kind="stable")[:top_items]
            nodes.append({
                "id": node_id(layer, k),
                "layer": layer,
                "community": k,
                "top_items": [{"item": names[i], "weight": float(w[i])} for i in order],
            })
    for t in range(1, len(phis)):
        mat = phis[t]
        for kp in range(mat.shape[1]):
            for k in range(mat.shape[0]):
                weight = float(mat[k, kp])
                if weight >= tau:
                    edges.append({"source": node_id(t + 1, kp), "target": node_id(t, k),
                                  "weight": weight})
    return {"layers": len(phis), "tau": tau, "nodes": nodes, "edges": edges}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(tree: dict, label_items: int = 5) -> str:
    lines = ["digraph communities {", "  rankdir=TB;", "  node [shape=box, fontsize=10];"]
    for node in tree["nodes"]:
        top = [e["item"] for e in node["top_items"][:label_items]]
        label = f"layer {node['layer']} / {node['community']}\\n" + "\\n".join(
            t.replace("\\", "\\\\").replace('"', '\\"') for t in top)
        lines.append(f"  {_quote(node['id'])} [label=\"{label}\"];")
    for e in tree["edges"]:
        pw = PENWIDTH_SCALE * e["weight"]
        lines.append(f"  {_quote(e['source'])} -> {_quote(e['target'])} "
                     f"[penwidth={pw:.4f}, label=\"{e['weight']:.3f}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_tree(tree: dict, json_path, dot_path) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(tree, fh, indent=2)
        fh.write("\n")
    with open(dot_path, "w", encoding="utf-8") as fh:
        fh.write(to_dot(tree))
