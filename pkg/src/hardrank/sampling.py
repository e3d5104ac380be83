"""Negative sampling: uniform (RNS) and two-step hard selection (DNS).

DNS draws H legal negatives per positive pair (independently, with
replacement across draws), scores the pool with the current model, and
keeps the highest-scored candidate; ties break toward the lowest pool
position. Every sampled negative respects the train positive-set
exclusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoNegativeAvailable
from .streams import derive_rng

__all__ = [
    "SamplerConfig",
    "TripletBatch",
    "sample_uniform_negative",
    "sample_dns_negative",
    "build_batch",
]


@dataclass(frozen=True)
class SamplerConfig:
    kind: str  # "rns" | "dns"
    pool_size: int = 1
    seed: int = 0
    rejection_cap: int = 100

    def __post_init__(self):
        if self.kind not in ("rns", "dns"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")


@dataclass
class TripletBatch:
    """One optimization step's (u, i, j) triples.

    ``pool_scores`` records the selected (max) pool score per triple for
    DNS; ``pools`` is retained only when diagnostics are requested.
    """

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray
    pool_scores: np.ndarray | None = None
    pools: np.ndarray | None = None

    def __len__(self):
        return len(self.users)


def _complement(dataset, u):
    positives = dataset.train_positive_sets[u]
    legal = [i for i in range(dataset.n_items) if i not in positives]
    if not legal:
        raise NoNegativeAvailable(f"user {u} has interacted with every item")
    return legal


def sample_uniform_negative(dataset, u: int, rng, rejection_cap: int = 100) -> int:
    """Uniform draw over the user's non-interacted items.

    Rejection sampling against the train positive set, falling back to
    explicit complement enumeration after ``rejection_cap`` failures.
    """
    positives = dataset.train_positive_sets[u]
    if len(positives) >= dataset.n_items:
        raise NoNegativeAvailable(f"user {u} has interacted with every item")
    for _ in range(rejection_cap):
        j = int(rng.integers(dataset.n_items))
        if j not in positives:
            return j
    legal = _complement(dataset, u)
    return legal[int(rng.integers(len(legal)))]


def sample_dns_negative(dataset, model, u: int, H: int, rng, rejection_cap: int = 100):
    """Two-step hard selection; returns (item, pool)."""
    pool = [sample_uniform_negative(dataset, u, rng, rejection_cap) for _ in range(H)]
    scores = model.score_pool(np.asarray([u]), np.asarray([pool]))[0]
    best = int(np.argmax(scores))
    return pool[best], pool


def _draw_pools(dataset, users, H, rng, rejection_cap):
    """(B, H) legal negatives, each entry individually uniform per user."""
    n_items = dataset.n_items
    cand = rng.integers(n_items, size=(len(users), H))
    dense = dataset.train_positive_matrix()
    if dense is not None:
        bad = dense[users[:, None], cand]
        tries = 0
        while bad.any() and tries < rejection_cap:
            cand[bad] = rng.integers(n_items, size=int(bad.sum()))
            bad = dense[users[:, None], cand]
            tries += 1
        if bad.any():
            for r, c in zip(*np.nonzero(bad)):
                legal = _complement(dataset, int(users[r]))
                cand[r, c] = legal[int(rng.integers(len(legal)))]
    else:
        for r, u in enumerate(users):
            positives = dataset.train_positive_sets[int(u)]
            for c in range(H):
                j = int(cand[r, c])
                if j in positives:
                    cand[r, c] = sample_uniform_negative(
                        dataset, int(u), rng, rejection_cap)
    # users with no legal negative never terminate rejection; guard explicitly
    full = [int(u) for u in np.unique(users)
            if len(dataset.train_positive_sets[int(u)]) >= n_items]
    if full:
        raise NoNegativeAvailable(f"user {full[0]} has interacted with every item")
    return cand


def build_batch(dataset, model, positives: np.ndarray, config: SamplerConfig,
                batch_index: int = 0, record_pools: bool = False) -> TripletBatch:
    """One negative per positive pair via the configured sampler.

    Deterministic given (config.seed, batch_index). With H = 1 the DNS
    pool degenerates to a single uniform draw, so DNS and RNS consume the
    same stream and produce identical batches.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    if len(positives) == 0:
        raise ValueError("positives must be nonempty")
    users = positives[:, 0]
    rng = derive_rng(config.seed, "batch", batch_index)
    H = config.pool_size if config.kind == "dns" else 1
    pools = _draw_pools(dataset, users, H, rng, config.rejection_cap)
    if config.kind == "rns":
        neg = pools[:, 0].copy()
        pool_scores = None
    else:
        scores = model.score_pool(users, pools)
        sel = np.argmax(scores, axis=1)
        neg = pools[np.arange(len(users)), sel]
        pool_scores = scores[np.arange(len(users)), sel]
    return TripletBatch(
        users=users.copy(),
        pos_items=positives[:, 1].copy(),
        neg_items=neg,
        pool_scores=pool_scores,
        pools=pools if record_pools else None,
    )
