"""Command-line entry point: ``ordgraph {train,eval,recommend,export-tree,synth}``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .checkpoint import load_checkpoint, save_checkpoint, write_matrix
from .config import RunConfig
from .errors import (
    BadDimensions,
    ConfigError,
    DataError,
    MissingCheckpoint,
    NoEvaluableUsers,
    NonPositiveParameter,
    OrdGraphError,
    UnknownUser,
)
from .metrics import EvalConfig, evaluate, rank_items, write_metrics
from .ogfa import Hyper, simulate
from .parallel import default_workers
from .rng import RngStream
from .sparse import build_adjacency, build_ordinal
from .train import as_deltas, fit, write_timing_log, write_train_log
from .tree import build_tree, write_tree

log = logging.getLogger("ordgraph")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

# flag dest -> RunConfig key
TRAIN_FLAGS = {
    "ratings": "ratings", "edges": "edges", "value_map": "value_map", "bins": "bins",
    "cosine_eps": "cosine_eps", "test_ratio": "test_ratio", "split_seed": "split_seed",
    "model": "kind", "widths": "widths", "V": "V", "threshold_init": "threshold_init",
    "burn_in": "burn_in", "collect": "collect", "stride": "stride", "seed": "seed",
    "workers": "workers", "compact": "compact", "r": "r", "c0": "c0", "gamma0": "gamma0",
    "eta": "eta", "e0": "e0", "f0": "f0", "N": "N", "s_levels": "s_levels", "out": "out_dir",
}


def resolve_config(args) -> RunConfig:
    """Default, then file, then flags."""
    cfg = RunConfig(workers=default_workers())
    if args.config:
        cfg = RunConfig.from_ini(_read_config(args.config), base=cfg)
    cfg.update({key: getattr(args, dest, None) for dest, key in TRAIN_FLAGS.items()})
    return cfg.validate()


def _read_config(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None


def hyper_from(cfg: RunConfig) -> Hyper:
    return Hyper(r=cfg.r, c_init=cfg.c_init, c0=cfg.c0, gamma0=cfg.gamma0, eta=cfg.eta,
                 e0=cfg.e0, f0=cfg.f0, resample_c=cfg.resample_c,
                 learn_thresholds=cfg.learn_thresholds, exact_exposure=cfg.exact_exposure)


def load_dataset(cfg: RunConfig) -> dataio.Dataset:
    if not cfg.ratings:
        raise ConfigError("no ratings file given")
    vmap = dataio.make_value_map(cfg.value_map, cfg.V, cfg.bins)
    raw = dataio.load_ratings(cfg.ratings, cfg.V, vmap)
    U, I = len(raw.users), len(raw.items)
    if cfg.test_ratio > 0:
        train, test = dataio.split(raw.triples, 1.0 - cfg.test_ratio, cfg.split_seed)
    else:
        train, test = raw.triples, np.zeros((0, 3), dtype=np.int64)
    Y = build_ordinal(train, U, I, cfg.V)
    meta = {"ratings": str(cfg.ratings), "value_map": cfg.value_map, "test_ratio": cfg.test_ratio,
            "split_seed": cfg.split_seed, "cosine_eps": cfg.cosine_eps}
    if cfg.value_map == "counts":
        meta["bins"] = list(cfg.bins)
    graph = None
    if cfg.edges:
        graph = build_adjacency(dataio.load_edges(cfg.edges, raw.users), U)
        meta["graph"] = str(cfg.edges)
    elif cfg.cosine_eps > 0:
        graph = dataio.cosine_graph(Y, cfg.cosine_eps)
        meta["graph"] = f"cosine>{cfg.cosine_eps!r}"
    return dataio.Dataset(Y, test, graph, raw.users, raw.items, cfg.V, meta)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    ds = load_dataset(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    dataio.write_json(out / "dataset.json", ds.manifest())
    dataio.write_triples(out / "test.tsv", ds.test, ds.users, ds.items)
    log.info("training %s on %d users, %d items, %d ratings, %d edges",
             cfg.kind, ds.Y_train.n_users, ds.Y_train.n_items, ds.Y_train.nnz,
             ds.graph.n_edges if ds.graph is not None else 0)
    result = fit(ds.Y_train, ds.graph, cfg.kind, cfg.widths, hyper_from(cfg), cfg.burn_in,
                 cfg.collect, cfg.stride, cfg.seed, cfg.workers,
                 validation=ds.test if len(ds.test) else None,
                 threshold_init=as_deltas(cfg.threshold_init, cfg.V), log_every=50)
    write_train_log(out / "train_log.csv", result)
    write_timing_log(out / "timing.csv", result)
    tm = result.state.tm
    dataio.write_json(out / "thresholds.json", {
        "delta": tm.delta.tolist(), "gamma": tm.gamma.tolist(), "V": tm.V})
    save_checkpoint(out / "checkpoint", cfg.kind, result.state, result.collected,
                    result.phi_means, ds.Y_train, ds.users, ds.items,
                    extra={"seed": cfg.seed}, compact=cfg.compact)
    print(out / "checkpoint")
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    cfg = EvalConfig(N=args.N, s_levels=args.s or [1])
    cfg.validate(ck.V)
    test_path = args.test or Path(args.checkpoint).parent / "test.tsv"
    test = dataio.load_test(test_path, ck.users, ck.items, ck.V)
    rows = evaluate(ck.score_rows, ck.Y_train.triples(), test, cfg, model=args.name or ck.model,
                    dataset=args.dataset, graded=args.graded)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(rows, out / "metrics.csv", out / "metrics.json")
    for row in rows:
        print(f"s={row['s']} HR@{row['N']}={row['HR']:.5f} NDCG@{row['N']}={row['NDCG']:.5f} "
              f"users={row['n_evaluable_users']}")
    return EXIT_OK


def _user_list(arg: str) -> list[str]:
    p = Path(arg)
    if p.is_file():
        return [line.strip() for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
    return [x for x in arg.split(",") if x]


def cmd_recommend(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    if args.N < 1:
        raise ConfigError("N must be >= 1")
    names = _user_list(args.users)
    missing = [u for u in names if u not in ck.users]
    if missing:
        raise UnknownUser(f"unknown user id(s): {', '.join(missing[:5])}")
    dense = [ck.users[u] for u in names]
    scores = ck.score_rows(dense) if dense else np.zeros((0, len(ck.items)))
    lines = []
    for name, u, row in zip(names, dense, scores):
        exclude = [i for i, _ in ck.Y_train.row(u)]
        for rank, i in enumerate(rank_items(row, exclude, args.N), start=1):
            lines.append(f"{name}\t{rank}\t{ck.items.external(i)}\t{float(row[i])!r}\n")
    text = "".join(lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _item_names(ck, path):
    names = list(ck.items.ids)
    if path:
        lookup = {}
        with dataio.open_text(path) as fh:
            for line in fh:
                parts = line.rstrip("\r\n").split("\t", 1)
                if len(parts) == 2:
                    lookup[parts[0]] = parts[1]
        names = [lookup.get(x, x) for x in names]
    return names


def cmd_export_tree(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    tree = build_tree(ck.phi_means, _item_names(ck, args.item_names), args.top_items, args.tau)
    prefix = Path(args.out) if args.out else Path(args.checkpoint).parent / "tree"
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_tree(tree, prefix.with_suffix(".json"), prefix.with_suffix(".dot"))
    print(f"{len(tree['nodes'])} nodes, {len(tree['edges'])} edges -> {prefix}.json/.dot")
    return EXIT_OK


def cmd_synth(args) -> int:
    deltas = np.array([float(x) for x in args.deltas.split(",")])
    if deltas.size != args.V:
        raise ConfigError(f"--deltas needs {args.V} values")
    if np.any(deltas <= 0):
        raise ConfigError("--deltas must be positive")
    for name in ("users", "items", "K", "V"):
        if getattr(args, name) < 1:
            raise ConfigError(f"--{name} must be >= 1")
    hyper = Hyper(c_init=args.c_init, eta=args.eta, c0=args.c0, gamma0=args.gamma0)
    hyper.validate()
    sim = simulate(args.users, args.items, args.K, args.V, hyper, deltas, RngStream(args.seed))
    out = Path(args.out)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    users = dataio.IdMap(f"u{u}" for u in range(args.users))
    items = dataio.IdMap(f"i{i}" for i in range(args.items))
    dataio.write_triples(out / "ratings.tsv", sim.Y.triples(), users, items)
    dataio.write_edges(out / "edges.tsv", sim.A, users)
    write_matrix(out / "truth" / "theta.bin", sim.theta)
    write_matrix(out / "truth" / "phi.bin", sim.phi)
    write_matrix(out / "truth" / "scales.bin", sim.scales)
    dataio.write_json(out / "deltas.json", {"delta": sim.tm.delta.tolist(), "V": sim.tm.V})
    dataio.write_json(out / "manifest.json", {
        "users": args.users, "items": args.items, "K": args.K, "V": args.V,
        "seed": args.seed, "c_init": args.c_init, "eta": args.eta, "c0": args.c0,
        "gamma0": args.gamma0, "n_ratings": sim.Y.nnz, "n_edges": sim.A.n_edges,
    })
    print(f"{sim.Y.nnz} ratings, {sim.A.n_edges} edges -> {out}")
    return EXIT_OK


def _csv_ints(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ordgraph", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model and write a checkpoint")
    t.add_argument("--config", help="INI configuration file")
    t.add_argument("--ratings")
    t.add_argument("--edges")
    t.add_argument("--value-map", dest="value_map", choices=["identity", "counts"])
    t.add_argument("--bins", type=_csv_ints)
    t.add_argument("--cosine-eps", dest="cosine_eps", type=float)
    t.add_argument("--test-ratio", dest="test_ratio", type=float)
    t.add_argument("--split-seed", dest="split_seed", type=int)
    t.add_argument("--model", choices=["ogfa", "oggbn"])
    t.add_argument("--widths", type=_csv_ints, help="K, or K1,K2,... for oggbn")
    t.add_argument("-V", dest="V", type=int)
    t.add_argument("--threshold-init", dest="threshold_init")
    t.add_argument("--burn-in", dest="burn_in", type=int)
    t.add_argument("--collect", type=int)
    t.add_argument("--stride", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--compact", action="store_const", const=True, default=None,
                   help="store posterior-mean factors instead of every collected state")
    for name in ("r", "c0", "gamma0", "eta", "e0", "f0"):
        t.add_argument(f"--{name}", type=float)
    t.add_argument("--N", type=int)
    t.add_argument("--s", dest="s_levels", type=_csv_ints)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="HR/NDCG of a checkpoint on held-out ratings")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", help="held-out TSV (default: test.tsv beside the checkpoint)")
    e.add_argument("--N", type=int, default=100)
    e.add_argument("--s", type=_csv_ints, help="relevance levels, e.g. 1,3,5")
    e.add_argument("--graded", action="store_true", help="use held-out levels as gains")
    e.add_argument("--name", help="model label in the metrics table")
    e.add_argument("--dataset", default="")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("recommend", help="top-N items for given users")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--users", required=True, help="comma-separated ids or a file of ids")
    r.add_argument("--N", type=int, default=10)
    r.add_argument("--out")
    r.set_defaults(func=cmd_recommend)

    x = sub.add_parser("export-tree", help="community taxonomy as JSON and DOT")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--top-items", dest="top_items", type=int, default=10)
    x.add_argument("--tau", type=float, default=0.05)
    x.add_argument("--item-names", dest="item_names", help="TSV of item id and display name")
    x.add_argument("--out", help="output prefix (default: tree beside the checkpoint)")
    x.set_defaults(func=cmd_export_tree)

    s = sub.add_parser("synth", help="simulate ratings and a graph with known factors")
    s.add_argument("--out", required=True)
    s.add_argument("--users", type=int, default=200)
    s.add_argument("--items", type=int, default=300)
    s.add_argument("--K", type=int, default=5)
    s.add_argument("-V", dest="V", type=int, default=5)
    s.add_argument("--deltas", default="0.5,0.3,0.2,0.15,0.1")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--c-init", dest="c_init", type=float, default=0.2)
    s.add_argument("--eta", type=float, default=0.1)
    s.add_argument("--c0", type=float, default=200.0)
    s.add_argument("--gamma0", type=float, default=1.0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NonPositiveParameter, BadDimensions) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, MissingCheckpoint, UnknownUser, NoEvaluableUsers, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except (OrdGraphError, RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
