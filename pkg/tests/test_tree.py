import json

import numpy as np
import pytest

from ordgraph.deep import project_phis
from ordgraph.errors import ConfigError
from ordgraph.tree import build_tree, to_dot, write_tree


def dirichlet_cols(gen, rows, cols):
    return gen.dirichlet(np.ones(rows), size=cols).T


def test_flat_tree(rng):
    phi = dirichlet_cols(rng, 12, 4)
    tree = build_tree([phi], top_items=3)
    assert tree["layers"] == 1 and tree["edges"] == []
    assert [n["id"] for n in tree["nodes"]] == ["L1_C0", "L1_C1", "L1_C2", "L1_C3"]
    top = tree["nodes"][2]["top_items"]
    assert [int(t["item"]) for t in top] == np.argsort(-phi[:, 2], kind="stable")[:3].tolist()


def test_identity_second_layer(rng):
    phis = [dirichlet_cols(rng, 10, 3), np.eye(3)]
    tree = build_tree(phis)
    edges = tree["edges"]
    assert len(edges) == 3
    for k, e in enumerate(edges):
        assert e == {"source": f"L2_C{k}", "target": f"L1_C{k}", "weight": 1.0}
    # a deep community with identity loading projects to its child
    deep = [n for n in tree["nodes"] if n["layer"] == 2]
    assert deep[1]["top_items"] == tree["nodes"][1]["top_items"]


def test_no_pruning_counts(rng):
    phis = [dirichlet_cols(rng, 10, 5), dirichlet_cols(rng, 5, 3), dirichlet_cols(rng, 3, 2)]
    tree = build_tree(phis, tau=0.0)
    for t, K_t in ((2, 5), (3, 3)):
        for k in range(phis[t - 1].shape[1]):
            out = [e for e in tree["edges"] if e["source"] == f"L{t}_C{k}"]
            assert len(out) == K_t
    pruned = build_tree(phis, tau=0.3)
    assert all(e["weight"] >= 0.3 for e in pruned["edges"])
    assert len(pruned["edges"]) < len(tree["edges"])


def test_projection_weights(rng):
    phis = [dirichlet_cols(rng, 8, 3), dirichlet_cols(rng, 3, 2)]
    tree = build_tree(phis, top_items=8)
    node = next(n for n in tree["nodes"] if n["id"] == "L2_C1")
    w = phis[0] @ phis[1][:, 1]
    assert np.allclose(project_phis(phis, 2, 1), w)
    assert [t["weight"] for t in node["top_items"]] == pytest.approx(np.sort(w)[::-1].tolist())


def test_names_and_files(tmp_path, rng):
    phis = [dirichlet_cols(rng, 4, 2), dirichlet_cols(rng, 2, 1)]
    tree = build_tree(phis, item_names=["Heat", 'Say "hi"', "Up", "Ran"], top_items=2)
    write_tree(tree, tmp_path / "t.json", tmp_path / "t.dot")
    assert json.loads((tmp_path / "t.json").read_text()) == tree
    dot = (tmp_path / "t.dot").read_text()
    assert dot.startswith("digraph") and dot.rstrip().endswith("}")
    assert dot.count("->") == len(tree["edges"])
    e = tree["edges"][0]
    assert f"penwidth={8 * e['weight']:.4f}" in to_dot(tree)


def test_rejects_bad_args(rng):
    with pytest.raises(ConfigError):
        build_tree([np.eye(2)], top_items=0)
    with pytest.raises(ConfigError):
        build_tree([np.eye(2)], tau=-1)
