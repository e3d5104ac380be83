"""Loss assembly, analytic gradients, Adam, and the epoch loop.

The loss over a triplet batch is the mean per-triple pairwise term plus
l2/2 times the squared norms of the base-table rows the batch touches
(each distinct row once). Gradients are accumulated sparsely per row and
applied with a lazily-stepped Adam: each row keeps its own step counter
so bias correction never decays rows the batch did not touch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluation
from .model import EmbeddingTable, ScoringModel
from .prefcurve import BPR_CURVE, PreferenceCurve, delta_g, delta_sigma, neg_log_g
from .sampling import SamplerConfig, build_batch
from .streams import derive_rng

__all__ = [
    "LossConfig",
    "TrainConfig",
    "AdamState",
    "SparseGrads",
    "TrainResult",
    "pairwise_margin",
    "batch_margins",
    "batch_loss",
    "batch_gradients",
    "adam_step",
    "train",
]


@dataclass(frozen=True)
class LossConfig:
    kind: str  # "bpr" | "hardbpr"
    curve: PreferenceCurve = BPR_CURVE
    l2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bpr", "hardbpr"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.l2 < 0.0:
            raise ValueError("l2 must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 2048
    eval_every: int = 1
    early_stop_patience: int = 10
    k: int = 50
    seed: int = 0
    learning_rate: float = 0.01
    eval_test: bool = True
    exclude_val_at_test: bool = True

    def __post_init__(self):
        for name in ("batch_size", "eval_every", "early_stop_patience", "k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class SparseGrads:
    """Accumulated per-row gradients for both embedding kinds."""

    user_idx: np.ndarray
    user_grads: np.ndarray
    item_idx: np.ndarray
    item_grads: np.ndarray

    def pairs(self):
        return (("user", self.user_idx, self.user_grads),
                ("item", self.item_idx, self.item_grads))


class AdamState:
    """Per-row Adam accumulators with lazy step counters."""

    def __init__(self, table: EmbeddingTable, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self._m = {"user": np.zeros_like(table.user_vectors),
                   "item": np.zeros_like(table.item_vectors)}
        self._v = {"user": np.zeros_like(table.user_vectors),
                   "item": np.zeros_like(table.item_vectors)}
        self.steps = {"user": np.zeros(table.n_users, dtype=np.int64),
                      "item": np.zeros(table.n_items, dtype=np.int64)}

    def apply(self, table: EmbeddingTable, grads: SparseGrads):
        b1, b2 = self.beta1, self.beta2
        for kind, idx, grad in grads.pairs():
            if len(idx) == 0:
                continue
            self.steps[kind][idx] += 1
            t = self.steps[kind][idx][:, None].astype(float)
            m = self._m[kind]
            v = self._v[kind]
            m[idx] = b1 * m[idx] + (1.0 - b1) * grad
            v[idx] = b2 * v[idx] + (1.0 - b2) * grad * grad
            m_hat = m[idx] / (1.0 - b1 ** t)
            v_hat = v[idx] / (1.0 - b2 ** t)
            table.rows(kind)[idx] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def adam_step(state: AdamState, table: EmbeddingTable, grads: SparseGrads):
    """One bias-corrected Adam update on the rows the gradients touch."""
    state.apply(table, grads)


def pairwise_margin(model: ScoringModel, u: int, i: int, j: int) -> float:
    """Estimated preference difference between items i and j for user u."""
    view = model.view
    return float(view.user_vectors[u] @ (view.item_vectors[i] - view.item_vectors[j]))


def batch_margins(batch, model: ScoringModel) -> np.ndarray:
    view = model.view
    uv = view.user_vectors[batch.users]
    diff = view.item_vectors[batch.pos_items] - view.item_vectors[batch.neg_items]
    return np.einsum("bd,bd->b", uv, diff)


def _per_triple_loss(margins: np.ndarray, loss: LossConfig) -> np.ndarray:
    if loss.kind == "bpr":
        return np.logaddexp(0.0, -margins)
    return neg_log_g(loss.curve, margins)


def _touched_rows(batch):
    return (np.unique(batch.users),
            np.unique(np.concatenate([batch.pos_items, batch.neg_items])))


def batch_loss(batch, model: ScoringModel, loss: LossConfig) -> float:
    """Mean per-triple loss plus l2/2 * squared norms of touched rows."""
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    value = float(np.mean(_per_triple_loss(batch_margins(batch, model), loss)))
    if loss.l2 > 0:
        users, items = _touched_rows(batch)
        table = model.table
        value += 0.5 * loss.l2 * (
            float(np.sum(table.user_vectors[users] ** 2))
            + float(np.sum(table.item_vectors[items] ** 2))
        )
    return value


def batch_gradients(batch, model: ScoringModel, loss: LossConfig) -> SparseGrads:
    """Analytic gradient of ``batch_loss`` w.r.t. the base table.

    Per triple the pairwise term contributes -delta * d(margin)/d(row)
    on the view; graph models pull those back through the transpose of
    the propagation operator. The scalar delta is the configured
    gradient-magnitude curve evaluated at the margin.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    margins = batch_margins(batch, model)
    if loss.kind == "bpr":
        delta = delta_sigma(margins)
    else:
        delta = delta_g(loss.curve, margins)
    coef = -delta / len(batch)

    view = model.view
    uv = view.user_vectors[batch.users]
    diff = view.item_vectors[batch.pos_items] - view.item_vectors[batch.neg_items]
    gu = np.zeros_like(view.user_vectors)
    gi = np.zeros_like(view.item_vectors)
    np.add.at(gu, batch.users, coef[:, None] * diff)
    np.add.at(gi, batch.pos_items, coef[:, None] * uv)
    np.add.at(gi, batch.neg_items, -coef[:, None] * uv)

    gu, gi = model.pull_back(gu, gi)

    if loss.l2 > 0:
        users, items = _touched_rows(batch)
        gu[users] += loss.l2 * model.table.user_vectors[users]
        gi[items] += loss.l2 * model.table.item_vectors[items]

    user_idx = np.nonzero(np.any(gu != 0.0, axis=1))[0]
    item_idx = np.nonzero(np.any(gi != 0.0, axis=1))[0]
    return SparseGrads(user_idx, gu[user_idx], item_idx, gi[item_idx])


@dataclass
class TrainResult:
    best_table: EmbeddingTable
    best_epoch: int
    best_val_recall: float
    reports: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)


def train(dataset, model: ScoringModel, sampler: SamplerConfig,
          loss: LossConfig, cfg: TrainConfig, progress=None) -> TrainResult:
    """Epoch loop: shuffle positives, sample, step, periodically evaluate.

    Keeps the checkpoint with the best validation recall and stops after
    ``early_stop_patience`` evaluations without improvement. The metric
    series is returned as MetricReport rows with attached mean loss.
    """
    optimizer = AdamState(model.table, cfg.learning_rate)
    positives = dataset.train
    best_table = model.table.copy()
    best_val = -np.inf
    best_epoch = 0
    result = TrainResult(best_table, 0, 0.0)
    stale = 0
    global_batch = 0

    for epoch in range(1, cfg.epochs + 1):
        rng = derive_rng(cfg.seed, "shuffle", epoch)
        order = rng.permutation(len(positives))
        losses = []
        start = time.perf_counter()
        for lo in range(0, len(order), cfg.batch_size):
            rows = positives[order[lo:lo + cfg.batch_size]]
            model.refresh()
            batch = build_batch(dataset, model, rows, sampler, batch_index=global_batch)
            global_batch += 1
            losses.append(batch_loss(batch, model, loss))
            grads = batch_gradients(batch, model, loss)
            adam_step(optimizer, model.table, grads)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        result.epoch_losses.append(mean_loss)

        if epoch % cfg.eval_every == 0:
            model.refresh()
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            val_report = evaluation.evaluate(model, dataset, "val", cfg.k,
                                             exclusion="train", epoch=epoch)
            val_report.mean_loss = mean_loss
            val_report.elapsed_ms = elapsed_ms
            result.reports.append(val_report)
            if cfg.eval_test:
                excl = "train+val" if cfg.exclude_val_at_test else "train"
                test_report = evaluation.evaluate(model, dataset, "test", cfg.k,
                                                  exclusion=excl, epoch=epoch)
                test_report.mean_loss = mean_loss
                test_report.elapsed_ms = elapsed_ms
                result.reports.append(test_report)
            if progress is not None:
                progress(epoch, val_report)
            if val_report.recall > best_val:
                best_val = val_report.recall
                result.best_table = model.table.copy()
                result.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break

    result.best_val_recall = 0.0 if best_val == -np.inf else float(best_val)
    return result
