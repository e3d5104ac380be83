"""Interaction ingestion, filtering, splitting, and synthetic generation.

Raw logs are `user<sep>item<sep>timestamp` rows. The pipeline applies
user-level k-core filtering, a single global temporal split (80/10/10 with
the latest records held out for testing), and dense 0-based re-indexing.
A planted-preference synthetic generator provides a controlled environment
with known false negatives for robustness studies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyAfterFilter, ParseError, SpecError
from .streams import derive_rng

__all__ = [
    "RawInteraction",
    "InteractionDataset",
    "SyntheticSpec",
    "load_interactions",
    "load_presplit",
    "k_core_filter",
    "temporal_split",
    "generate_synthetic",
    "summary_line",
]

_DELIMITERS = {"tsv": "\t", "csv": ","}

# Above this many user*item cells the dense positive-membership matrix is
# not built and samplers fall back to per-user set lookups.
_DENSE_LIMIT = 200_000_000


@dataclass(frozen=True)
class RawInteraction:
    user_id: str
    item_id: str
    timestamp: int


@dataclass
class InteractionDataset:
    """Indexed implicit feedback with per-user positive sets.

    ``train``/``val``/``test`` are (n, 2) int arrays of (user_idx,
    item_idx). ``train_positive_sets[u]`` holds u's train items;
    ``all_positive_sets[u]`` additionally includes val items and is the
    exclusion set for test-time ranking. Immutable by convention after
    construction.
    """

    n_users: int
    n_items: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    train_positive_sets: list
    all_positive_sets: list
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)
    _dense_positives: np.ndarray = field(default=None, repr=False, compare=False)

    def train_positive_matrix(self):
        """Dense bool (n_users, n_items) train membership, cached.

        Returns None when the catalog is too large to densify.
        """
        if self.n_users * self.n_items > _DENSE_LIMIT:
            return None
        if self._dense_positives is None:
            mat = np.zeros((self.n_users, self.n_items), dtype=bool)
            if len(self.train):
                mat[self.train[:, 0], self.train[:, 1]] = True
            object.__setattr__(self, "_dense_positives", mat)
        return self._dense_positives


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-preference generator parameters."""

    n_users: int
    n_items: int
    latent_dim: int
    interactions_per_user: int
    false_negative_fraction: float
    noise_level: float
    seed: int
    val_fraction: float = 0.1
    test_fraction: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.false_negative_fraction < 1.0):
            raise SpecError("false_negative_fraction must be in [0, 1)")
        if self.noise_level < 0.0:
            raise SpecError("noise_level must be >= 0")
        if self.false_negative_fraction + self.test_fraction >= 1.0:
            raise SpecError("false-negative plus test fractions must stay below 1")
        for name in ("n_users", "n_items", "latent_dim", "interactions_per_user"):
            if getattr(self, name) <= 0:
                raise SpecError(f"{name} must be positive")


def load_interactions(path, format: str = "tsv"):
    """Parse `user<sep>item<sep>timestamp` rows, in file order."""
    delim = _DELIMITERS[format]
    rows = []
    with open(path, newline="") as fh:
        for lineno, parts in enumerate(csv.reader(fh, delimiter=delim), start=1):
            if not parts or (len(parts) == 1 and not parts[0].strip()):
                continue
            if len(parts) != 3:
                raise ParseError(lineno, f"expected 3 fields, got {len(parts)}")
            user, item, ts = (p.strip() for p in parts)
            try:
                ts_int = int(ts)
            except ValueError:
                raise ParseError(lineno, f"non-integer timestamp {ts!r}") from None
            rows.append(RawInteraction(user, item, ts_int))
    return rows


def k_core_filter(rows, k: int):
    """Drop users with fewer than k interactions, to fixpoint.

    Items are left untouched, so removing a user never changes another
    user's count and the fixpoint is reached after one pass; the loop is
    kept for clarity of the contract.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    current = list(rows)
    while True:
        counts = {}
        for r in current:
            counts[r.user_id] = counts.get(r.user_id, 0) + 1
        keep = {u for u, n in counts.items() if n >= k}
        filtered = [r for r in current if r.user_id in keep]
        if len(filtered) == len(current):
            break
        current = filtered
    if not current:
        raise EmptyAfterFilter(f"no user has {k}+ interactions")
    return current


def temporal_split(rows, fractions=(0.8, 0.1, 0.1)) -> InteractionDataset:
    """Global temporal 80/10/10 split with dense re-indexing.

    Rows are stably sorted by timestamp (ties keep input order); the
    latest 10% become test, the next-earlier 10% validation. Val/test
    rows whose user or item never occurs in train are dropped, as are
    duplicate (user, item) pairs within and across splits.
    """
    if not rows:
        raise EmptyAfterFilter("no rows to split")
    ordered = sorted(rows, key=lambda r: r.timestamp)
    n = len(ordered)
    n_test = int(n * fractions[2])
    n_val = int(n * fractions[1])
    n_train = n - n_val - n_test
    raw_splits = [ordered[:n_train], ordered[n_train:n_train + n_val], ordered[n_train + n_val:]]
    if any(len(s) == 0 for s in raw_splits):
        raise EmptyAfterFilter("a split is empty; supply more rows")

    user_index, item_index = {}, {}
    for r in ordered:
        user_index.setdefault(r.user_id, len(user_index))
        item_index.setdefault(r.item_id, len(item_index))

    train_users = {r.user_id for r in raw_splits[0]}
    train_items = {r.item_id for r in raw_splits[0]}

    seen = set()
    splits = []
    for pos, chunk in enumerate(raw_splits):
        pairs = []
        for r in chunk:
            if pos > 0 and (r.user_id not in train_users or r.item_id not in train_items):
                continue
            key = (r.user_id, r.item_id)
            if key in seen:
                continue
            seen.add(key)
            pairs.append((user_index[r.user_id], item_index[r.item_id]))
        splits.append(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    if any(len(s) == 0 for s in splits):
        raise EmptyAfterFilter("a split is empty after cold-start/duplicate removal")

    n_users, n_items = len(user_index), len(item_index)
    users_sorted = sorted(user_index, key=user_index.get)
    items_sorted = sorted(item_index, key=item_index.get)
    return _assemble(n_users, n_items, *splits, user_ids=users_sorted, item_ids=items_sorted)


def load_presplit(train_path, val_path, test_path, format: str = "tsv") -> InteractionDataset:
    """Load three `user<sep>item` files, bypassing the temporal split."""
    delim = _DELIMITERS[format]

    def read(path):
        pairs = []
        with open(path, newline="") as fh:
            for lineno, parts in enumerate(csv.reader(fh, delimiter=delim), start=1):
                if not parts or (len(parts) == 1 and not parts[0].strip()):
                    continue
                if len(parts) != 2:
                    raise ParseError(lineno, f"expected 2 fields, got {len(parts)}")
                pairs.append((parts[0].strip(), parts[1].strip()))
        return pairs

    raw = [read(train_path), read(val_path), read(test_path)]
    if any(not chunk for chunk in raw):
        raise EmptyAfterFilter("a pre-split file is empty")
    user_index, item_index = {}, {}
    for chunk in raw:
        for u, i in chunk:
            user_index.setdefault(u, len(user_index))
            item_index.setdefault(i, len(item_index))
    splits = [
        np.asarray([(user_index[u], item_index[i]) for u, i in chunk], dtype=np.int64)
        for chunk in raw
    ]
    users_sorted = sorted(user_index, key=user_index.get)
    items_sorted = sorted(item_index, key=item_index.get)
    return _assemble(len(user_index), len(item_index), *splits,
                     user_ids=users_sorted, item_ids=items_sorted)


def _assemble(n_users, n_items, train, val, test, user_ids=None, item_ids=None):
    train_sets = [set() for _ in range(n_users)]
    for u, i in train:
        train_sets[u].add(int(i))
    all_sets = [set(s) for s in train_sets]
    for u, i in val:
        all_sets[u].add(int(i))
    return InteractionDataset(
        n_users=n_users,
        n_items=n_items,
        train=np.asarray(train, dtype=np.int64).reshape(-1, 2),
        val=np.asarray(val, dtype=np.int64).reshape(-1, 2),
        test=np.asarray(test, dtype=np.int64).reshape(-1, 2),
        train_positive_sets=[frozenset(s) for s in train_sets],
        all_positive_sets=[frozenset(s) for s in all_sets],
        user_ids=list(user_ids) if user_ids else [str(u) for u in range(n_users)],
        item_ids=list(item_ids) if item_ids else [str(i) for i in range(n_items)],
    )


def generate_synthetic(spec: SyntheticSpec):
    """Planted-preference dataset with known false negatives.

    Each user's preference scores come from a fixed-seed latent model
    plus Gaussian noise; the top ``interactions_per_user`` items are the
    user's liked pool. A ``false_negative_fraction`` of that pool is
    withheld from every split (the planted false negatives); of the rest,
    the configured val/test fractions are held out and the remainder
    trains. Fully deterministic given the seed.

    Returns (dataset, planted) where planted is a list of (user_idx,
    item_idx) pairs.
    """
    rng = derive_rng(spec.seed, "synthetic")
    user_latent = rng.normal(size=(spec.n_users, spec.latent_dim))
    item_latent = rng.normal(size=(spec.n_items, spec.latent_dim))

    m = spec.interactions_per_user
    if m > spec.n_items:
        raise SpecError("interactions_per_user exceeds the catalog size")
    fn_count = int(round(m * spec.false_negative_fraction))
    n_test = max(1, int(round(m * spec.test_fraction))) if spec.test_fraction > 0 else 0
    n_val = max(1, int(round(m * spec.val_fraction))) if spec.val_fraction > 0 else 0
    if fn_count + n_test + n_val >= m:
        raise SpecError("fractions leave no training interactions per user")

    train, val, test, planted = [], [], [], []
    for u in range(spec.n_users):
        scores = user_latent[u] @ item_latent.T
        if spec.noise_level > 0:
            scores = scores + spec.noise_level * rng.normal(size=spec.n_items)
        top = np.argpartition(-scores, m - 1)[:m]
        top = top[np.argsort(-scores[top], kind="stable")]
        order = rng.permutation(m)
        fn_items = top[order[:fn_count]]
        rest = top[order[fn_count:]]
        planted.extend((u, int(i)) for i in fn_items)
        test.extend((u, int(i)) for i in rest[:n_test])
        val.extend((u, int(i)) for i in rest[n_test:n_test + n_val])
        train.extend((u, int(i)) for i in rest[n_test + n_val:])

    train = np.asarray(train, dtype=np.int64)
    train_items = set(train[:, 1].tolist())
    val = np.asarray([p for p in val if p[1] in train_items], dtype=np.int64).reshape(-1, 2)
    test = np.asarray([p for p in test if p[1] in train_items], dtype=np.int64).reshape(-1, 2)
    dataset = _assemble(spec.n_users, spec.n_items, train, val, test)
    return dataset, planted


def summary_line(dataset: InteractionDataset) -> str:
    """One CSV row of dataset statistics: sizes and interaction density."""
    total = len(dataset.train) + len(dataset.val) + len(dataset.test)
    density = total / (dataset.n_users * dataset.n_items)
    return (
        f"{dataset.n_users},{dataset.n_items},{len(dataset.train)},"
        f"{len(dataset.val)},{len(dataset.test)},{density:.5f}"
    )


SUMMARY_HEADER = "#User,#Item,#Train,#Val,#Test,Density"
