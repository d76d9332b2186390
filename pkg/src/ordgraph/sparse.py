"""Sparse containers for the ordinal rating matrix and the social graph.

Both structures are immutable after construction. ``OrdinalMatrix`` keeps a
row-compressed view (user-major) and a column-compressed mirror (item-major)
of the same nonzero set; level 0 is never stored. ``AdjacencyGraph`` keeps
sorted, deduplicated neighbour lists of a symmetric graph without self-loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateEntry, IndexOutOfRange, LevelOutOfRange


@dataclass(frozen=True, eq=False)
class OrdinalMatrix:
    n_users: int
    n_items: int
    max_level: int
    # row view: nonzeros sorted by (user, item)
    indptr: np.ndarray
    items: np.ndarray
    levels: np.ndarray
    # column view: nonzeros sorted by (item, user)
    col_indptr: np.ndarray
    col_users: np.ndarray
    col_levels: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.items.shape[0])

    @property
    def users(self) -> np.ndarray:
        """Row index of every nonzero in row-view order."""
        return np.repeat(np.arange(self.n_users), np.diff(self.indptr))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_users, self.n_items)

    def row(self, u: int) -> list[tuple[int, int]]:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        return list(zip(self.items[lo:hi].tolist(), self.levels[lo:hi].tolist()))

    def column(self, i: int) -> list[tuple[int, int]]:
        lo, hi = self.col_indptr[i], self.col_indptr[i + 1]
        return list(zip(self.col_users[lo:hi].tolist(), self.col_levels[lo:hi].tolist()))

    def get(self, u: int, i: int) -> int:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        pos = lo + np.searchsorted(self.items[lo:hi], i)
        if pos < hi and self.items[pos] == i:
            return int(self.levels[pos])
        return 0

    def iter_rows(self) -> Iterator[tuple[int, int, int]]:
        for u, i, v in zip(self.users.tolist(), self.items.tolist(), self.levels.tolist()):
            yield u, i, v

    def iter_columns(self) -> Iterator[tuple[int, int, int]]:
        items = np.repeat(np.arange(self.n_items), np.diff(self.col_indptr))
        for i, u, v in zip(items.tolist(), self.col_users.tolist(), self.col_levels.tolist()):
            yield u, i, v

    def triples(self) -> np.ndarray:
        """(nnz, 3) integer array of (user, item, level) rows."""
        return np.column_stack([self.users, self.items, self.levels]).astype(np.int64)

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.levels.astype(np.float64), self.items, self.indptr), shape=self.shape
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.int64)
        out[self.users, self.items] = self.levels
        return out

    def with_levels(self, levels: np.ndarray, max_level: int) -> "OrdinalMatrix":
        """Same nonzero pattern, relabelled levels (row-view order)."""
        return build_ordinal(
            np.column_stack([self.users, self.items, levels]), self.n_users, self.n_items, max_level
        )


def build_ordinal(triples, n_users: int, n_items: int, max_level: int) -> OrdinalMatrix:
    """Build an ``OrdinalMatrix`` from (user, item, level) triples.

    Levels must lie in 1..max_level. Repeated (user, item) pairs raise
    ``DuplicateEntry`` because ordinal levels cannot be summed.
    """
    arr = np.asarray(list(triples) if not isinstance(triples, np.ndarray) else triples)
    arr = arr.reshape(-1, 3).astype(np.int64)
    users, items, levels = arr[:, 0], arr[:, 1], arr[:, 2]
    if arr.shape[0]:
        if users.min() < 0 or users.max() >= n_users or items.min() < 0 or items.max() >= n_items:
            raise IndexOutOfRange(f"triple index outside {n_users}x{n_items}")
        if levels.min() < 1 or levels.max() > max_level:
            raise LevelOutOfRange(f"levels must lie in 1..{max_level}")
    order = np.lexsort((items, users))
    users, items, levels = users[order], items[order], levels[order]
    if users.size > 1:
        dup = (users[1:] == users[:-1]) & (items[1:] == items[:-1])
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEntry(f"duplicate entry for (user={users[k]}, item={items[k]})")
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(users, minlength=n_users), out=indptr[1:])
    corder = np.lexsort((users, items))
    col_indptr = np.zeros(n_items + 1, dtype=np.int64)
    np.cumsum(np.bincount(items, minlength=n_items), out=col_indptr[1:])
    return OrdinalMatrix(
        n_users=int(n_users),
        n_items=int(n_items),
        max_level=int(max_level),
        indptr=indptr,
        items=items,
        levels=levels,
        col_indptr=col_indptr,
        col_users=users[corder],
        col_levels=levels[corder],
    )


@dataclass(frozen=True, eq=False)
class AdjacencyGraph:
    n_users: int
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_edges(self) -> int:
        """Number of unordered pairs."""
        return int(self.indices.shape[0] // 2)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def edge_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Unordered edges as two arrays with u < v, sorted by (u, v)."""
        src = np.repeat(np.arange(self.n_users), np.diff(self.indptr))
        keep = src < self.indices
        return src[keep], self.indices[keep]

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(self.indices.shape[0], dtype=np.int64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n_users, self.n_users))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray().astype(bool)

    def same_as(self, other: "AdjacencyGraph") -> bool:
        return (
            self.n_users == other.n_users
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


def _from_directed_pairs(src: np.ndarray, dst: np.ndarray, n_users: int) -> AdjacencyGraph:
    keep = src != dst
    src, dst = src[keep], dst[keep]
    s = np.concatenate([src, dst])
    d = np.concatenate([dst, src])
    if s.size:
        key = np.unique(s * n_users + d)
        s, d = key // n_users, key % n_users
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(s, minlength=n_users), out=indptr[1:])
    return AdjacencyGraph(int(n_users), indptr, d.astype(np.int64))


def build_adjacency(edges: Iterable, n_users: int) -> AdjacencyGraph:
    """Symmetrise and deduplicate an edge list; self-loops are dropped."""
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n_users):
        raise IndexOutOfRange(f"edge endpoint outside 0..{n_users - 1}")
    return _from_directed_pairs(arr[:, 0], arr[:, 1], n_users)


def _from_csr(mat: sp.csr_matrix) -> AdjacencyGraph:
    coo = mat.tocoo()
    return _from_directed_pairs(coo.row.astype(np.int64), coo.col.astype(np.int64), mat.shape[0])


def adjacency_power(graph: AdjacencyGraph, t: int) -> AdjacencyGraph:
    """Binarised t-th power: u~v iff u != v and a walk of length exactly t joins them."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if t == 1:
        return graph
    base = graph.to_csr()
    walk = base
    for _ in range(t - 1):
        # keep the diagonal of intermediate powers: u->v->u->w is a valid walk
        walk = (walk @ base).tocsr()
        walk.data[:] = 1
        walk.eliminate_zeros()
    return _from_csr(walk)
