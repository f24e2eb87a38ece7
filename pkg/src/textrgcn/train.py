"""Transductive training over the whole graph with masked loss.

Every epoch runs a full-graph forward pass, computes cross-entropy on the
training mask only, and applies one full-batch Adam update. The model
snapshot with the best validation accuracy (ties resolved toward the
earlier epoch) is returned; early stopping watches validation accuracy
with a configurable patience. Labels outside the training mask never touch
the loss, so the parameter trajectory is independent of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import TokenizedDocument
from .errors import ConfigError, EmptyClass, EmptyMask, NonFiniteInput
from .features import NodeFeatureMatrix
from .graph import HeteroTextGraph, RelationAdjacency, to_relation_adjacency
from .rgcn import (
    AdamState,
    RGCNModel,
    adam_step,
    backward,
    model_forward,
    softmax_cross_entropy,
    softmax_cross_entropy_grad,
)
from .rng import substream_rng


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    dropout: float = 0.5
    hidden_dim: int = 64
    seed: int = 7
    patience: int | None = 50  # None disables early stopping
    normalization: str = "weighted-degree"
    use_edge_weights: bool = True
    num_bases: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.patience is not None and self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def num_epochs(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,val_acc\n")
            for e in range(self.num_epochs()):
                fh.write(
                    f"{e},{self.train_loss[e]:.17g},"
                    f"{self.val_loss[e]:.17g},{self.val_accuracy[e]:.17g}\n"
                )


@dataclass
class Metrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    confusion: np.ndarray  # [true, predicted]
    loss: float | None = None


def node_labels_and_masks(
    graph: HeteroTextGraph, docs: Sequence[TokenizedDocument]
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-node label array (-1 where unlabeled) and split masks.

    Word nodes carry no label and belong to no split; document order must
    match the graph's document nodes.
    """
    if len(docs) != graph.num_docs:
        raise ConfigError(
            f"corpus has {len(docs)} documents but graph has {graph.num_docs}"
        )
    n = graph.num_nodes
    labels = np.full(n, -1, dtype=np.int64)
    masks = {
        name: np.zeros(n, dtype=bool) for name in ("train", "validation", "test")
    }
    for i, doc in enumerate(docs):
        if doc.id != graph.node_key(i):
            raise ConfigError(
                f"document order mismatch at index {i}: "
                f"{doc.id!r} vs {graph.node_key(i)!r}"
            )
        if doc.label is not None:
            labels[i] = doc.label
        if doc.split in masks:
            masks[doc.split][i] = True
    return labels, masks


def train(
    graph: HeteroTextGraph,
    features: NodeFeatureMatrix,
    labels: np.ndarray,
    masks: dict[str, np.ndarray],
    config: TrainConfig,
    ablate_channels: Iterable[str] = (),
) -> tuple[RGCNModel, TrainHistory]:
    """Full-batch transductive training; deterministic given config.seed."""
    if features.num_rows != graph.num_nodes:
        raise ConfigError("feature row count must equal graph node count")
    adj = to_relation_adjacency(
        graph,
        normalization=config.normalization,
        use_edge_weights=config.use_edge_weights,
        ablate_channels=ablate_channels,
    )
    train_mask = np.asarray(masks["train"], dtype=bool)
    val_mask = np.asarray(masks.get("validation", np.zeros(graph.num_nodes, bool)))
    if not train_mask.any():
        raise EmptyMask("training split is empty")
    num_classes = int(labels[labels >= 0].max()) + 1
    train_labels = labels[train_mask]
    for c in range(num_classes):
        if not np.any(train_labels == c):
            raise EmptyClass(f"class {c} has no training documents")

    model = RGCNModel(
        features.dimension,
        config.hidden_dim,
        num_classes,
        dropout=config.dropout,
        num_bases=config.num_bases,
        seed=config.seed,
        normalization=config.normalization,
        use_edge_weights=config.use_edge_weights,
    )
    state = AdamState.for_model(model, learning_rate=config.learning_rate)
    dropout_stream = substream_rng(config.seed, "dropout-epochs")
    X = features.matrix

    history = TrainHistory()
    has_val = bool(val_mask.any())
    best_acc = -1.0
    best_params = None
    best_epoch = 0
    stale = 0
    for epoch in range(config.epochs):
        epoch_seed = int(dropout_stream.integers(1 << 62))
        logits, cache = model_forward(X, adj, model, training=True, seed=epoch_seed)
        loss, probs = softmax_cross_entropy(logits, labels, train_mask)
        if not np.isfinite(loss):
            raise NonFiniteInput(f"training loss diverged at epoch {epoch}")
        grads = backward(cache, softmax_cross_entropy_grad(probs, labels, train_mask))
        adam_step(model, grads, state)

        history.train_loss.append(loss)
        if has_val:
            eval_logits, _ = model_forward(X, adj, model, training=False, seed=0)
            v_loss, _ = softmax_cross_entropy(eval_logits, labels, val_mask)
            v_pred = np.argmax(eval_logits[val_mask], axis=1)
            v_acc = float((v_pred == labels[val_mask]).mean())
            history.val_loss.append(v_loss)
            history.val_accuracy.append(v_acc)
            if v_acc > best_acc:
                best_acc = v_acc
                best_epoch = epoch
                best_params = {name: p.copy() for name, p in model.parameters()}
                stale = 0
            else:
                stale += 1
                if config.patience is not None and stale > config.patience:
                    break
        else:
            history.val_loss.append(float("nan"))
            history.val_accuracy.append(float("nan"))
            best_epoch = epoch

    if best_params is not None:
        for name, p in model.parameters():
            p[...] = best_params[name]
        model.bump_version()
    history.best_epoch = best_epoch
    return model, history


def predict(
    model: RGCNModel,
    adj: RelationAdjacency,
    features: NodeFeatureMatrix,
    node_indices: Sequence[int] | np.ndarray,
) -> np.ndarray:
    """Argmax class per requested node; ties go to the lower class index."""
    logits, _ = model_forward(features.matrix, adj, model, training=False, seed=0)
    return np.argmax(logits[np.asarray(node_indices, dtype=np.int64)], axis=1)


def metrics_from_predictions(
    y_true: np.ndarray, y_pred: np.ndarray, num_classes: int
) -> Metrics:
    """Confusion-matrix metrics; zero-denominator rates are defined as 0."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    diag = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)
    precision = np.divide(
        diag, pred_totals, out=np.zeros(num_classes), where=pred_totals > 0
    )
    recall = np.divide(
        diag, true_totals, out=np.zeros(num_classes), where=true_totals > 0
    )
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(num_classes), where=pr > 0)
    return Metrics(
        accuracy=float(diag.sum() / max(1, confusion.sum())),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(f1.mean()),
        confusion=confusion,
    )


def evaluate(
    model: RGCNModel,
    graph: HeteroTextGraph | RelationAdjacency,
    features: NodeFeatureMatrix,
    mask: np.ndarray,
    labels: np.ndarray,
) -> Metrics:
    """Metrics over the masked nodes, plus the masked cross-entropy loss."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("evaluation mask is empty")
    if isinstance(graph, RelationAdjacency):
        adj = graph
    else:
        adj = to_relation_adjacency(
            graph,
            normalization=model.normalization,
            use_edge_weights=model.use_edge_weights,
        )
    logits, _ = model_forward(features.matrix, adj, model, training=False, seed=0)
    loss, _ = softmax_cross_entropy(logits, labels, mask)
    y_pred = np.argmax(logits[mask], axis=1)
    metrics = metrics_from_predictions(labels[mask], y_pred, model.num_classes)
    metrics.loss = loss
    return metrics


def format_metrics_report(metrics: Metrics, split: str) -> str:
    """Human-readable metrics block for one split."""
    lines = [
        f"[{split}]",
        f"accuracy   {metrics.accuracy:.6f}",
        f"macro_f1   {metrics.macro_f1:.6f}",
    ]
    if metrics.loss is not None:
        lines.append(f"loss       {metrics.loss:.6f}")
    for c in range(metrics.confusion.shape[0]):
        lines.append(
            f"class {c}: precision {metrics.precision[c]:.6f} "
            f"recall {metrics.recall[c]:.6f} f1 {metrics.f1[c]:.6f}"
        )
    lines.append("confusion (rows true, cols predicted):")
    for row in metrics.confusion:
        lines.append("  " + " ".join(f"{int(v):6d}" for v in row))
    return "\n".join(lines)


def summary_line(metrics: Metrics, split: str) -> str:
    loss = metrics.loss if metrics.loss is not None else float("nan")
    return (
        f"split={split} acc={metrics.accuracy:.6f} "
        f"macro_f1={metrics.macro_f1:.6f} loss={loss:.6f}"
    )
