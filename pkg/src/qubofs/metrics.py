"""Ranking and beyond-accuracy evaluation at a fixed cutoff.

Accuracy metrics are macro-averaged over users with at least one relevant
item; binary relevance throughout. Diversity is measured as one minus the
Gini coefficient of recommendation exposure over the whole catalog (never-
recommended items count as zeros), so uniform exposure scores 1. Inter-list
diversity averages pairwise list dissimilarity, sampling user pairs without
replacement once the pair count exceeds ``max_pairs``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateCatalog

EVAL_TSV_HEADER = (
    "cutoff\tprecision\trecall\tndcg\tmap\titem_coverage\tgini_diversity\tmil\tn_users_evaluated"
)


@dataclass(frozen=True)
class EvalReport:
    cutoff: int
    precision: float
    recall: float
    ndcg: float
    map: float
    item_coverage: float
    gini_diversity: float
    mil: float
    n_users_evaluated: int

    def __post_init__(self):
        for name in ("precision", "recall", "ndcg", "map", "item_coverage",
                     "gini_diversity", "mil"):
            v = getattr(self, name)
            if not (math.isfinite(v) and -1e-12 <= v <= 1.0 + 1e-12):
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "precision": self.precision,
            "recall": self.recall,
            "ndcg": self.ndcg,
            "map": self.map,
            "item_coverage": self.item_coverage,
            "gini_diversity": self.gini_diversity,
            "mil": self.mil,
            "n_users_evaluated": self.n_users_evaluated,
        }

    def to_tsv_row(self) -> str:
        return "\t".join(
            [
                str(self.cutoff),
                f"{self.precision:.17g}",
                f"{self.recall:.17g}",
                f"{self.ndcg:.17g}",
                f"{self.map:.17g}",
                f"{self.item_coverage:.17g}",
                f"{self.gini_diversity:.17g}",
                f"{self.mil:.17g}",
                str(self.n_users_evaluated),
            ]
        )

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def accuracy_metrics(
    recommended: Sequence[Sequence[int]],
    relevant: Sequence[set[int]],
    cutoff: int,
) -> tuple[float, float, float, float]:
    """(precision, recall, ndcg, map): macro averages over users with a
    non-empty relevant set. Lists are assumed already truncated to cutoff."""
    if len(recommended) != len(relevant):
        raise ValueError("recommended and relevant must align per user")
    discounts = 1.0 / np.log2(np.arange(2, cutoff + 2))
    precisions, recalls, ndcgs, aps = [], [], [], []
    for rec, rel in zip(recommended, relevant):
        if not rel:
            continue
        hits = 0
        dcg = 0.0
        ap_sum = 0.0
        for rank0, item in enumerate(rec[:cutoff]):
            if int(item) in rel:
                hits += 1
                dcg += discounts[rank0]
                ap_sum += hits / (rank0 + 1)
        ideal = min(cutoff, len(rel))
        idcg = discounts[:ideal].sum()
        precisions.append(hits / cutoff)
        recalls.append(hits / len(rel))
        ndcgs.append(dcg / idcg if idcg > 0 else 0.0)
        aps.append(ap_sum / ideal)
    if not precisions:
        return 0.0, 0.0, 0.0, 0.0
    return (
        float(np.mean(precisions)),
        float(np.mean(recalls)),
        float(np.mean(ndcgs)),
        float(np.mean(aps)),
    )


def item_coverage(recommended: Sequence[Sequence[int]], n_items: int) -> float:
    """Share of the catalog recommended to at least one user."""
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    seen: set[int] = set()
    for rec in recommended:
        seen.update(int(i) for i in rec)
    return len(seen) / n_items


def gini_diversity(recommended: Sequence[Sequence[int]], n_items: int) -> float:
    """1 - Gini coefficient of exposure counts over the full catalog."""
    if n_items < 2:
        raise DegenerateCatalog("need at least 2 items for a concentration index")
    counts = np.zeros(n_items)
    for rec in recommended:
        for i in rec:
            counts[int(i)] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no recommendations to measure")
    freq = np.sort(counts / total)
    index = np.arange(1, n_items + 1)
    gini = float(((2 * index - n_items - 1) * freq).sum() / (n_items - 1))
    return 1.0 - gini


def mean_inter_list(
    recommended: Sequence[Sequence[int]],
    cutoff: int,
    max_pairs: int = 10_000,
    seed: int = 0,
) -> float:
    """Mean over user pairs of 1 - |overlap| / cutoff; exact when the pair
    count fits in max_pairs, otherwise a seeded uniform pair sample."""
    n_users = len(recommended)
    if n_users < 2:
        raise ValueError("need at least 2 users")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    sets = [set(int(i) for i in rec) for rec in recommended]
    total_pairs = n_users * (n_users - 1) // 2
    if total_pairs <= max_pairs:
        pair_iter = (
            (u, v) for u in range(n_users) for v in range(u + 1, n_users)
        )
        count = total_pairs
    else:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(total_pairs, size=max_pairs, replace=False)
        # decode triangular pair index: offsets[u] is the first index of row u
        row_sizes = np.arange(n_users - 1, 0, -1)
        offsets = np.concatenate([[0], np.cumsum(row_sizes)])
        us = np.searchsorted(offsets, chosen, side="right") - 1
        vs = chosen - offsets[us] + us + 1
        pair_iter = zip(us.tolist(), vs.tolist())
        count = max_pairs
    acc = 0.0
    for u, v in pair_iter:
        acc += 1.0 - len(sets[u] & sets[v]) / cutoff
    return acc / count


def evaluate_recommendations(
    recommended: Sequence[Sequence[int]],
    relevant: Sequence[set[int]],
    cutoff: int,
    n_items: int,
    max_pairs: int = 10_000,
    seed: int = 0,
) -> EvalReport:
    """Full report over users with a non-empty relevant set."""
    kept = [(rec, rel) for rec, rel in zip(recommended, relevant) if rel]
    lists = [rec for rec, _ in kept]
    rels = [rel for _, rel in kept]
    precision, recall, ndcg, map_score = accuracy_metrics(lists, rels, cutoff)
    if lists and any(len(rec) for rec in lists):
        coverage = item_coverage(lists, n_items)
        gini = gini_diversity(lists, n_items)
    else:
        coverage = 0.0
        gini = 0.0
    mil = mean_inter_list(lists, cutoff, max_pairs, seed) if len(lists) >= 2 else 0.0
    return EvalReport(
        cutoff=cutoff,
        precision=precision,
        recall=recall,
        ndcg=ndcg,
        map=map_score,
        item_coverage=coverage,
        gini_diversity=gini,
        mil=mil,
        n_users_evaluated=len(lists),
    )
