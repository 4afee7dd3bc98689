"""Top-M ranking, recall@M and MAP@M."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRelevant, UnknownUser


@dataclass
class RankedList:
    user: int
    items: np.ndarray
    scores: np.ndarray


@dataclass
class MetricsReport:
    ms: list[int]
    recall: dict[int, float]
    map: dict[int, float]
    users_evaluated: int
    users_skipped: int
    extra: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"recall\t{m}\t{self.recall[m]:.6f}" for m in self.ms]
        out += [f"map\t{m}\t{self.map[m]:.6f}" for m in self.ms]
        return out

    def table(self) -> str:
        rows = [f"{'M':>6} {'recall@M':>10} {'MAP@M':>10}"]
        rows += [f"{m:>6} {self.recall[m]:>10.4f} {self.map[m]:>10.4f}" for m in self.ms]
        rows.append(f"users evaluated: {self.users_evaluated}, skipped (no test items): {self.users_skipped}")
        return "\n".join(rows)


def rank_order(scores: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Candidates sorted by descending score, ties by ascending item id."""
    return candidates[np.lexsort((candidates, -scores[candidates]))]


def rank_candidates(U: np.ndarray, V: np.ndarray, train_items, user: int,
                    top: int | None = None) -> RankedList:
    if not 0 <= user < U.shape[0]:
        raise UnknownUser(f"user index {user} not in model")
    scores = V @ U[user]
    mask = np.ones(V.shape[0], dtype=bool)
    mask[np.asarray(train_items, dtype=np.int64)] = False
    ranked = rank_order(scores, np.flatnonzero(mask))
    if top is not None:
        ranked = ranked[:top]
    return RankedList(user, ranked, scores[ranked])


def recall_at_m(ranked, relevant, m: int) -> float:
    relevant = set(np.asarray(list(relevant)).tolist())
    if not relevant:
        raise EmptyRelevant("no relevant items; skip this user")
    hits = len(relevant.intersection(np.asarray(ranked)[:m].tolist()))
    return hits / len(relevant)


def average_precision(ranked, relevant, m: int) -> float:
    relevant = set(np.asarray(list(relevant)).tolist())
    if not relevant:
        raise EmptyRelevant("no relevant items; skip this user")
    hits, total = 0, 0.0
    for k, item in enumerate(np.asarray(ranked)[:m].tolist(), 1):
        if item in relevant:
            hits += 1
            total += hits / k
    return total / min(len(relevant), m)


def map_at_m(ranked_lists, relevants, m: int) -> float:
    aps = [average_precision(r, rel, m) for r, rel in zip(ranked_lists, relevants) if len(rel)]
    if not aps:
        raise EmptyRelevant("no user has relevant items")
    return float(np.mean(aps))


def evaluate(U: np.ndarray, V: np.ndarray, train_by_user, test_by_user, ms) -> MetricsReport:
    """Rank every user with held-out items and average recall@M / AP@M."""
    ms = sorted(int(m) for m in ms)
    top = max(ms)
    rec = {m: [] for m in ms}
    aps = {m: [] for m in ms}
    skipped = 0
    for u in range(U.shape[0]):
        rel = test_by_user[u]
        if len(rel) == 0:
            skipped += 1
            continue
        ranked = rank_candidates(U, V, train_by_user[u], u, top=top).items
        for m in ms:
            rec[m].append(recall_at_m(ranked, rel, m))
            aps[m].append(average_precision(ranked, rel, m))
    n = len(rec[ms[0]])
    return MetricsReport(ms, {m: float(np.mean(rec[m])) if n else 0.0 for m in ms},
                         {m: float(np.mean(aps[m])) if n else 0.0 for m in ms}, n, skipped)
