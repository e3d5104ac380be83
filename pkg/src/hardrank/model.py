"""Learnable scoring functions: matrix factorization and a light graph
convolution over the user-item bipartite graph.

Embeddings live in a plain float64 table. The graph path propagates the
table through a fixed symmetric-normalized adjacency and averages layers;
because propagation is a fixed linear operator, gradients are pulled back
analytically through the same operator (the adjacency is symmetric).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .streams import derive_rng

__all__ = [
    "EmbeddingTable",
    "GraphPropagation",
    "ScoringModel",
    "init_embeddings",
    "score_mf",
    "propagate",
    "apply_sparse_gradients",
    "save_checkpoint",
    "load_checkpoint",
]

INIT_STD = 0.1


@dataclass
class EmbeddingTable:
    user_vectors: np.ndarray
    item_vectors: np.ndarray

    @property
    def d(self) -> int:
        return self.user_vectors.shape[1]

    @property
    def n_users(self) -> int:
        return self.user_vectors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_vectors.shape[0]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.user_vectors.copy(), self.item_vectors.copy())

    def rows(self, kind: str) -> np.ndarray:
        return self.user_vectors if kind == "user" else self.item_vectors


def init_embeddings(n_users: int, n_items: int, d: int, seed: int) -> EmbeddingTable:
    """Gaussian(0, 0.1^2) initialization from a derived stream."""
    if min(n_users, n_items, d) <= 0:
        raise ValueError("dimensions must be positive")
    rng = derive_rng(seed, "init")
    return EmbeddingTable(
        user_vectors=rng.normal(0.0, INIT_STD, size=(n_users, d)),
        item_vectors=rng.normal(0.0, INIT_STD, size=(n_items, d)),
    )


def score_mf(table: EmbeddingTable, u: int, i: int) -> float:
    return float(table.user_vectors[u] @ table.item_vectors[i])


class GraphPropagation:
    """Symmetric-normalized bipartite adjacency with layer averaging.

    Built from train interactions only; each nonzero of the square
    (n_users + n_items) adjacency equals 1/sqrt(deg(u) * deg(i)).
    """

    def __init__(self, dataset, n_layers: int = 2):
        if n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        self.n_layers = n_layers
        self.n_users = dataset.n_users
        self.n_items = dataset.n_items
        users = dataset.train[:, 0]
        items = dataset.train[:, 1]
        deg_u = np.bincount(users, minlength=self.n_users).astype(float)
        deg_i = np.bincount(items, minlength=self.n_items).astype(float)
        weights = 1.0 / np.sqrt(np.maximum(deg_u[users], 1.0) * np.maximum(deg_i[items], 1.0))
        n = self.n_users + self.n_items
        rows = np.concatenate([users, items + self.n_users])
        cols = np.concatenate([items + self.n_users, users])
        vals = np.concatenate([weights, weights])
        self.adjacency = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def apply(self, stacked: np.ndarray) -> np.ndarray:
        """Layer-averaged propagation of a stacked (users; items) matrix."""
        acc = stacked.copy()
        cur = stacked
        for _ in range(self.n_layers):
            cur = self.adjacency @ cur
            acc += cur
        return acc / (self.n_layers + 1)


def propagate(table: EmbeddingTable, graph: GraphPropagation) -> EmbeddingTable:
    """Propagated view of the table; scoring proceeds as plain dot products."""
    stacked = np.vstack([table.user_vectors, table.item_vectors])
    out = graph.apply(stacked)
    return EmbeddingTable(out[: graph.n_users], out[graph.n_users:])


class ScoringModel:
    """A scoring function over an embedding table, optionally graph-propagated.

    ``score_count`` counts individual user-item scorings made through the
    sampling-facing methods; evaluation goes through ``score_all_items``
    and is not counted, so the counter isolates sampler cost.
    """

    def __init__(self, table: EmbeddingTable, kind: str = "mf",
                 graph: GraphPropagation | None = None):
        if kind not in ("mf", "lightgcn"):
            raise ValueError(f"unknown model kind {kind!r}")
        if kind == "lightgcn" and graph is None:
            raise ValueError("lightgcn requires a GraphPropagation")
        self.table = table
        self.kind = kind
        self.graph = graph
        self.score_count = 0
        self._view = None
        self.refresh()

    def refresh(self):
        """Recompute the propagated view (no-op for plain MF)."""
        if self.kind == "mf":
            self._view = self.table
        else:
            self._view = propagate(self.table, self.graph)

    @property
    def view(self) -> EmbeddingTable:
        return self._view

    def score(self, u: int, i: int) -> float:
        self.score_count += 1
        return score_mf(self._view, u, i)

    def score_pool(self, users: np.ndarray, pools: np.ndarray) -> np.ndarray:
        """(B, H) scores for per-row candidate pools; counts B*H scorings."""
        self.score_count += pools.size
        uv = self._view.user_vectors[users]
        iv = self._view.item_vectors[pools]
        return np.einsum("bd,bhd->bh", uv, iv)

    def score_all_items(self, u: int) -> np.ndarray:
        return self._view.user_vectors[u] @ self._view.item_vectors.T

    def score_user_block(self, users: np.ndarray) -> np.ndarray:
        return self._view.user_vectors[users] @ self._view.item_vectors.T

    def pull_back(self, user_grads: np.ndarray, item_grads: np.ndarray):
        """Gradients w.r.t. the view mapped to gradients w.r.t. the table.

        The propagation operator is linear and symmetric, so the pullback
        is the same layer-averaged propagation.
        """
        if self.kind == "mf":
            return user_grads, item_grads
        stacked = np.vstack([user_grads, item_grads])
        out = self.graph.apply(stacked)
        return out[: self.graph.n_users], out[self.graph.n_users:]


def apply_sparse_gradients(table: EmbeddingTable, grads, optimizer_state):
    """Apply accumulated per-row gradients with one optimizer step per row."""
    optimizer_state.apply(table, grads)


def save_checkpoint(path, table: EmbeddingTable, kind: str, seed: int,
                    user_ids=None, item_ids=None):
    """Write a bit-exact checkpoint plus the ID-index mapping file."""
    np.savez(
        path,
        user_vectors=table.user_vectors,
        item_vectors=table.item_vectors,
        kind=np.asarray(kind),
        seed=np.asarray(int(seed)),
        d=np.asarray(table.d),
    )
    if user_ids is not None:
        map_path = str(path)
        map_path = map_path[: -len(".npz")] if map_path.endswith(".npz") else map_path
        with open(map_path + "_ids.json", "w") as fh:
            json.dump({"users": list(user_ids), "items": list(item_ids or [])}, fh)


def load_checkpoint(path):
    """Load a checkpoint; returns (table, kind, seed)."""
    with np.load(path, allow_pickle=False) as npz:
        table = EmbeddingTable(npz["user_vectors"], npz["item_vectors"])
        return table, str(npz["kind"]), int(npz["seed"])
