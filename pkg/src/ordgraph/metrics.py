"""Top-N ranking metrics at a relevance level s.

An item is relevant to a user when its held-out level is at least ``s``.
Users without any relevant held-out item are left out of both metrics.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NoEvaluableUsers


@dataclass
class EvalConfig:
    N: int = 100
    s_levels: list[int] = field(default_factory=lambda: [1])

    def validate(self, V: int):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        for s in self.s_levels:
            if not 1 <= s <= V:
                raise ConfigError(f"relevance level s={s} outside 1..{V}")


def rank_items(scores, exclude=(), N: int = 100) -> list[int]:
    """Descending score, excluded items removed, ties by ascending item index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    if len(exclude):
        drop = np.zeros(scores.shape[0], dtype=bool)
        drop[np.fromiter(exclude, dtype=np.int64)] = True
        order = order[~drop[order]]
    return order[:N].tolist()


def held_out_levels(test) -> dict[int, dict[int, int]]:
    """user -> {item: level} from (user, item, level) rows or an existing mapping."""
    if isinstance(test, dict):
        return test
    out: dict[int, dict[int, int]] = defaultdict(dict)
    for u, i, v in np.asarray(test, dtype=np.int64).reshape(-1, 3).tolist():
        out[u][i] = v
    return dict(out)


def _relevant(levels: dict[int, int], s: int) -> set[int]:
    return {i for i, v in levels.items() if v >= s}


def _evaluable(ranked, test, s):
    by_user = held_out_levels(test)
    users = [u for u in sorted(by_user) if _relevant(by_user[u], s) and u in ranked]
    if not users:
        raise NoEvaluableUsers(f"no user has a held-out item at level >= {s}")
    return by_user, users


def hit_ratio(ranked: dict, test, s: int, N: int) -> float:
    by_user, users = _evaluable(ranked, test, s)
    hits = 0
    for u in users:
        rel = _relevant(by_user[u], s)
        hits += any(i in rel for i in ranked[u][:N])
    return hits / len(users)


def ndcg(ranked: dict, test, s: int, N: int, graded: bool = False) -> float:
    """Mean NDCG@N; binary gains by default, held-out level as gain if ``graded``."""
    by_user, users = _evaluable(ranked, test, s)
    discounts = 1.0 / np.log2(np.arange(2, N + 2))
    total = 0.0
    for u in users:
        levels = by_user[u]
        rel = _relevant(levels, s)
        gain = (lambda i: float(levels[i])) if graded else (lambda i: 1.0)
        dcg = sum(gain(i) * discounts[p] for p, i in enumerate(ranked[u][:N]) if i in rel)
        ideal = sorted((gain(i) for i in rel), reverse=True)[:N]
        idcg = float(np.dot(ideal, discounts[:len(ideal)]))
        total += dcg / idcg
    return total / len(users)


def n_evaluable(test, s: int) -> int:
    by_user = held_out_levels(test)
    return sum(1 for u in by_user if _relevant(by_user[u], s))


def rank_users(score_rows, users, exclude_by_user: dict, N: int) -> dict:
    """Rank every user in ``users`` given a callable returning their score rows."""
    ranked = {}
    users = list(users)
    for lo in range(0, len(users), 512):
        batch = users[lo:lo + 512]
        rows = score_rows(batch)
        for u, row in zip(batch, rows):
            ranked[u] = rank_items(row, exclude_by_user.get(u, ()), N)
    return ranked


def evaluate(score_rows, train_triples, test, cfg: EvalConfig, model: str = "", dataset: str = "",
             graded: bool = False) -> list[dict]:
    """One metrics row per relevance level."""
    by_user = held_out_levels(test)
    exclude: dict[int, set] = defaultdict(set)
    for u, i, _ in np.asarray(train_triples, dtype=np.int64).reshape(-1, 3).tolist():
        exclude[u].add(i)
    ranked = rank_users(score_rows, sorted(by_user), exclude, cfg.N)
    rows = []
    for s in cfg.s_levels:
        rows.append({
            "model": model,
            "dataset": dataset,
            "s": int(s),
            "N": int(cfg.N),
            "HR": hit_ratio(ranked, by_user, s, cfg.N),
            "NDCG": ndcg(ranked, by_user, s, cfg.N, graded=graded),
            "n_evaluable_users": n_evaluable(by_user, s),
        })
    return rows


METRIC_COLUMNS = ["model", "dataset", "s", "N", "HR", "NDCG", "n_evaluable_users"]


def write_metrics(rows, csv_path, json_path=None):
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
