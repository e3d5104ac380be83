"""Full-ranking Top-K evaluation: Recall@K and NDCG@K, macro-averaged.

Rankings cover the whole catalog minus a per-user exclusion set; ties
break toward the lower item index for determinism. Users with empty
ground truth are skipped in the averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroundTruth, KTooLarge

__all__ = [
    "MetricReport",
    "rank_items",
    "top_k_from_scores",
    "recall_at_k",
    "ndcg_at_k",
    "evaluate",
    "METRIC_CSV_HEADER",
    "metric_csv_row",
]

METRIC_CSV_HEADER = "epoch,split,recall_at_K,ndcg_at_K,mean_loss,elapsed_ms"


@dataclass
class MetricReport:
    epoch: int
    split: str
    recall: float
    ndcg: float
    users_evaluated: int
    mean_loss: float = float("nan")
    elapsed_ms: float = float("nan")


def metric_csv_row(report: MetricReport) -> str:
    return (f"{report.epoch},{report.split},{report.recall:.6f},"
            f"{report.ndcg:.6f},{report.mean_loss:.6f},{report.elapsed_ms:.1f}")


def top_k_from_scores(scores: np.ndarray, exclusion, K: int) -> np.ndarray:
    """Indices of the K highest scores outside ``exclusion``, descending.

    Exact tie handling: equal scores order by lower index.
    """
    masked = np.array(scores, dtype=np.float64)
    if exclusion:
        masked[list(exclusion)] = -np.inf
    available = int(np.sum(masked > -np.inf))
    if K > available:
        raise KTooLarge(f"K={K} exceeds {available} available items")
    order = np.lexsort((np.arange(len(masked)), -masked))
    return order[:K]


def rank_items(model, u: int, exclusion, K: int) -> np.ndarray:
    """The K highest-scored non-excluded items for user u, descending."""
    return top_k_from_scores(model.score_all_items(u), exclusion, K)


def _fast_top_k(scores_row: np.ndarray, K: int) -> np.ndarray:
    # partial selection; candidate ties then break by lower index, which
    # matches the full-sort path for all-distinct scores
    if K >= len(scores_row):
        cand = np.arange(len(scores_row))
    else:
        cand = np.argpartition(-scores_row, K - 1)[:K]
    order = np.lexsort((cand, -scores_row[cand]))
    return cand[order][:K]


def recall_at_k(ranked, ground_truth) -> float:
    if not ground_truth:
        raise EmptyGroundTruth("recall is undefined for empty ground truth")
    hits = sum(1 for i in ranked if i in ground_truth)
    return hits / len(ground_truth)


def ndcg_at_k(ranked, ground_truth) -> float:
    if not ground_truth:
        raise EmptyGroundTruth("ndcg is undefined for empty ground truth")
    dcg = 0.0
    for pos, item in enumerate(ranked, start=1):
        if item in ground_truth:
            dcg += 1.0 / math.log2(pos + 1)
    ideal = min(len(ranked), len(ground_truth))
    idcg = sum(1.0 / math.log2(p + 1) for p in range(1, ideal + 1))
    return dcg / idcg


def _split_ground_truth(dataset, split: str):
    pairs = dataset.val if split == "val" else dataset.test
    truth = {}
    for u, i in pairs:
        truth.setdefault(int(u), set()).add(int(i))
    return truth


def evaluate(model, dataset, split: str, K: int, exclusion: str = "train",
             epoch: int = 0) -> MetricReport:
    """Macro-averaged Recall@K / NDCG@K over users with ground truth.

    ``exclusion`` is "train" (validation protocol) or "train+val" (test
    protocol); excluded items are removed from each user's ranking.
    """
    if split not in ("val", "test"):
        raise ValueError(f"unknown split {split!r}")
    if exclusion not in ("train", "train+val"):
        raise ValueError(f"unknown exclusion policy {exclusion!r}")
    truth = _split_ground_truth(dataset, split)
    if not truth:
        raise ValueError(f"split {split!r} is empty")
    excl_sets = (dataset.train_positive_sets if exclusion == "train"
                 else dataset.all_positive_sets)

    users = sorted(truth)
    recalls, ndcgs = [], []
    chunk = 256
    for lo in range(0, len(users), chunk):
        block = users[lo:lo + chunk]
        scores = model.score_user_block(np.asarray(block))
        for row, u in enumerate(block):
            s = scores[row].copy()
            if excl_sets[u]:
                s[list(excl_sets[u])] = -np.inf
            ranked = _fast_top_k(s, min(K, int(np.sum(s > -np.inf))))
            recalls.append(recall_at_k(ranked, truth[u]))
            ndcgs.append(ndcg_at_k(ranked, truth[u]))
    return MetricReport(
        epoch=epoch,
        split=split,
        recall=float(np.mean(recalls)),
        ndcg=float(np.mean(ndcgs)),
        users_evaluated=len(users),
    )
