"""Dataset ingestion: TSV parsing, play-count quantisation, splitting, cosine graphs."""

from __future__ import annotations

import gzip
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import DataError, NonPositiveCount, ParseError, ValueOutOfRange
from .sparse import AdjacencyGraph, OrdinalMatrix, build_adjacency

log = logging.getLogger(__name__)

DEFAULT_COUNT_BINS = (1, 2, 6, 51)
DEFAULT_EPS = {"movielens": 0.45, "tasteprofile": 0.35}


def open_text(path, mode: str = "rt"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


class IdMap:
    """Bidirectional map between external string ids and dense indices."""

    def __init__(self, ids: Iterable[str] = ()):
        self.ids: list[str] = []
        self.index: dict[str, int] = {}
        for x in ids:
            self.add(x)

    def add(self, ext: str) -> int:
        idx = self.index.get(ext)
        if idx is None:
            idx = len(self.ids)
            self.index[ext] = idx
            self.ids.append(ext)
        return idx

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, ext) -> bool:
        return ext in self.index

    def __getitem__(self, ext: str) -> int:
        return self.index[ext]

    def external(self, idx: int) -> str:
        return self.ids[idx]

    def write(self, path):
        with open_text(path, "wt") as fh:
            for x in self.ids:
                fh.write(x + "\n")

    @classmethod
    def read(cls, path) -> "IdMap":
        with open_text(path) as fh:
            return cls(line.rstrip("\n") for line in fh)


def quantize_counts(count, bins=DEFAULT_COUNT_BINS):
    """Level = largest l with count >= bins[l-1]; default bins give four levels."""
    bins = np.asarray(bins, dtype=np.int64)
    if bins.size == 0 or bins[0] != 1 or np.any(np.diff(bins) <= 0):
        raise ValueError("bins must be strictly increasing and start at 1")
    c = np.asarray(count)
    if np.any(c < 1):
        raise NonPositiveCount("counts must be >= 1")
    out = np.searchsorted(bins, c, side="right")
    return out.item() if out.ndim == 0 else out


def make_value_map(kind: str, V: int, bins=DEFAULT_COUNT_BINS) -> Callable[[float], int]:
    """``identity`` for integer ratings 1..V, ``counts`` for binned play counts."""
    if kind == "identity":
        def identity(value: float) -> int:
            if value != int(value) or not 1 <= value <= V:
                raise ValueOutOfRange(f"rating {value} outside 1..{V}")
            return int(value)
        return identity
    if kind == "counts":
        if len(bins) != V:
            raise ValueError(f"{len(bins)} bins do not give V={V} levels")

        def counts(value: float) -> int:
            if value != int(value):
                raise ValueOutOfRange(f"count {value} is not an integer")
            return int(quantize_counts(int(value), bins))
        return counts
    raise ValueError(f"unknown value map {kind!r}")


@dataclass
class RawRatings:
    triples: np.ndarray          # (n, 3) dense (user, item, level)
    users: IdMap
    items: IdMap


def load_ratings(path, V: int, value_map=None, users: IdMap | None = None,
                 items: IdMap | None = None) -> RawRatings:
    """Parse ``user<TAB>item<TAB>value`` lines into dense triples."""
    value_map = value_map or make_value_map("identity", V)
    users = users if users is not None else IdMap()
    items = items if items is not None else IdMap()
    rows = []
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", path, lineno)
            try:
                value = float(parts[2])
            except ValueError:
                raise ParseError(f"value {parts[2]!r} is not numeric", path, lineno) from None
            try:
                level = value_map(value)
            except (ValueOutOfRange, NonPositiveCount) as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
            rows.append((users.add(parts[0]), items.add(parts[1]), level))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return RawRatings(arr, users, items)


def load_edges(path, users: IdMap) -> np.ndarray:
    """Parse ``user<TAB>user`` lines; edges touching unknown users are dropped."""
    rows = []
    skipped = 0
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"expected 2 tab-separated fields, got {len(parts)}", path, lineno)
            if parts[0] in users and parts[1] in users:
                rows.append((users[parts[0]], users[parts[1]]))
            else:
                skipped += 1
    if skipped:
        log.info("dropped %d edges with users absent from the ratings", skipped)
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def split(triples, ratio: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random split of nonzero triples into (train, test)."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n = triples.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    train = triples[np.sort(perm[:n_train])]
    test = triples[np.sort(perm[n_train:])]
    return train, test


def cosine_graph(Y: OrdinalMatrix, eps: float) -> AdjacencyGraph:
    """Edge u~v iff the cosine of the users' level vectors exceeds ``eps``.

    The Gram matrix is a sparse product, so only co-rating pairs are touched.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    X = Y.to_csr()
    gram = (X @ X.T).tocoo()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    keep = gram.row < gram.col
    r, c, d = gram.row[keep], gram.col[keep], gram.data[keep]
    sim = np.abs(d) / (norms[r] * norms[c])
    hit = sim > eps
    return build_adjacency(np.column_stack([r[hit], c[hit]]), Y.n_users)


@dataclass
class Dataset:
    Y_train: OrdinalMatrix
    test: np.ndarray                      # (n, 3) dense triples
    graph: AdjacencyGraph | None
    users: IdMap
    items: IdMap
    V: int
    meta: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        out = {
            "V": self.V,
            "n_users": self.Y_train.n_users,
            "n_items": self.Y_train.n_items,
            "n_train": self.Y_train.nnz,
            "n_test": int(self.test.shape[0]),
            "n_edges": self.graph.n_edges if self.graph is not None else 0,
        }
        out.update(self.meta)
        return out


def write_triples(path, triples, users: IdMap | None = None, items: IdMap | None = None):
    """TSV of triples, with external ids when maps are given."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    buf = io.StringIO()
    for u, i, v in triples.tolist():
        uu = users.external(u) if users is not None else str(u)
        ii = items.external(i) if items is not None else str(i)
        buf.write(f"{uu}\t{ii}\t{v}\n")
    with open_text(path, "wt") as fh:
        fh.write(buf.getvalue())


def write_edges(path, graph: AdjacencyGraph, users: IdMap | None = None):
    src, dst = graph.edge_pairs()
    with open_text(path, "wt") as fh:
        for u, v in zip(src.tolist(), dst.tolist()):
            a = users.external(u) if users is not None else str(u)
            b = users.external(v) if users is not None else str(v)
            fh.write(f"{a}\t{b}\n")


def read_dense_triples(path) -> np.ndarray:
    rows = []
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append([int(x) for x in line.split("\t")])
            except ValueError:
                raise ParseError("expected integer triple", path, lineno) from None
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def load_test(path, users: IdMap, items: IdMap, V: int) -> np.ndarray:
    """Held-out levels in external ids; rows with unseen users or items are dropped."""
    rows = []
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 3:
                raise ParseError("expected 3 tab-separated fields", path, lineno)
            try:
                level = int(parts[2])
            except ValueError:
                raise ParseError(f"level {parts[2]!r} is not an integer", path, lineno) from None
            if not 0 <= level <= V:
                raise ValueOutOfRange(f"{path}:{lineno}: level {level} outside 0..{V}")
            if parts[0] in users and parts[1] in items:
                rows.append((users[parts[0]], items[parts[1]], level))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def check_disjoint(train: np.ndarray, test: np.ndarray) -> None:
    a = {(int(u), int(i)) for u, i, _ in train}
    if any((int(u), int(i)) in a for u, i, _ in test):
        raise DataError("train and test share a (user, item) cell")
