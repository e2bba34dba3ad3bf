"""Loss, analytic gradients, Adam, and the full-batch training loop with
validation-driven early stopping.

Gradients are computed by hand-written backpropagation through the model
passes in :mod:`neubm.models`; the test suite checks them against central
finite differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyScopeError, NumericError, TrainingFailureError
from .graph import Graph
from .metrics import evaluate
from .models import (
    ModelConfig,
    ModelParams,
    backward_with_operator,
    forward_with_operator,
    init_params,
    prepare_operator,
)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 100
    selection_metric: str = "f1_macro"
    seed: int = 0

    def __post_init__(self):
        if self.patience > self.max_epochs:
            raise ConfigError("patience must be <= max_epochs")
        if self.selection_metric != "f1_macro":
            raise ConfigError("only f1_macro selection is supported")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "selection_metric": self.selection_metric,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TrainReport:
    epochs_run: int
    best_epoch: int
    loss_curve: tuple[float, ...]
    val_metric_curve: tuple[float, ...]  # index 0 is the pre-training evaluation
    wall_time_seconds: float


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    weight_decay: float = 0.0,
    params: ModelParams | None = None,
) -> float:
    """Mean negative log-likelihood over masked nodes + L2 penalty.

    The penalty is weight_decay * |params|^2 / 2 over the flat parameter
    vector; log-probabilities go through a shifted log-sum-exp so huge
    logits cannot overflow.
    """
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyScopeError("loss needs a nonempty mask")
    lp = log_softmax(logits[idx])
    nll = -lp[np.arange(idx.size), np.asarray(labels)[idx]].mean()
    if weight_decay != 0.0:
        if params is None:
            raise ConfigError("weight_decay > 0 requires params")
        flat = params.flat()
        nll += weight_decay * float(flat @ flat) / 2.0
    return float(nll)


def loss_and_gradients(
    params: ModelParams,
    graph: Graph,
    labels: np.ndarray,
    mask: np.ndarray,
    weight_decay: float = 0.0,
    mode: str = "eval",
    dropout_seed: int = 0,
    operator=None,
) -> tuple[float, np.ndarray]:
    """One forward/backward pass; returns (loss, flat gradient)."""
    if operator is None:
        operator = prepare_operator(graph, params.config)
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyScopeError("loss needs a nonempty mask")

    logits, cache = forward_with_operator(
        params, operator, graph.features, mode=mode, dropout_seed=dropout_seed
    )
    loss = cross_entropy_loss(logits, labels, mask, weight_decay, params)

    probs = softmax(logits[idx])
    dlogits = np.zeros_like(logits)
    dlogits[idx] = probs
    dlogits[idx, np.asarray(labels)[idx]] -= 1.0
    dlogits[idx] /= idx.size

    grads = backward_with_operator(params, operator, graph.features, dlogits, cache)
    flat = np.concatenate([g.ravel() for g in grads])
    if weight_decay != 0.0:
        flat = flat + weight_decay * params.flat()
    for name, g in zip(_array_names(params), grads):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return loss, flat


def gradients(
    params: ModelParams,
    graph: Graph,
    labels: np.ndarray,
    mask: np.ndarray,
    train_config: TrainConfig,
    mode: str = "eval",
    dropout_seed: int = 0,
) -> np.ndarray:
    _, flat = loss_and_gradients(
        params, graph, labels, mask,
        weight_decay=train_config.weight_decay,
        mode=mode, dropout_seed=dropout_seed,
    )
    return flat


def _array_names(params: ModelParams):
    if params.config.architecture == "gcn":
        return ["W0", "W1"]
    names = []
    for i in range(params.config.num_heads):
        names += [f"head{i}.W", f"head{i}.a_src", f"head{i}.a_dst"]
    names += ["out.W", "out.a_src", "out.a_dst"]
    return names


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


def adam_step(
    state: AdamState,
    flat_params: np.ndarray,
    grads: np.ndarray,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """Standard bias-corrected Adam update on flat vectors."""
    if flat_params.shape != grads.shape:
        raise NumericError("parameter/gradient shape mismatch")
    b1, b2 = betas
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * grads * grads
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new_params = flat_params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m=m, v=v, t=t)


# ---------------------------------------------------------------------------
# training loop


def train(
    graph: Graph,
    split,
    model_config: ModelConfig,
    train_config: TrainConfig,
    val_logits_transform=None,
) -> tuple[ModelParams, TrainReport]:
    """Full-batch training with early stopping on validation F1-macro.

    Returns the parameters of the best-validation epoch. An initial
    evaluation at epoch 0 seeds the best checkpoint; training stops once
    ``epoch - best_epoch >= patience`` or at max_epochs. The optional
    val_logits_transform(epoch, params, logits) hook lets the caller adjust
    logits before the selection metric is computed (used for calibrated
    selection with a periodically refreshed reference).
    """
    from .datasets import apply_split  # local import to avoid a cycle

    if graph.labels is None:
        raise ConfigError("training requires labels")
    g = apply_split(graph, split) if split is not None else graph
    train_mask = g.mask("train")
    val_mask = g.mask("val")
    labels = g.labels

    operator = prepare_operator(g, model_config)
    params = init_params(model_config)
    flat = params.flat()
    state = AdamState.zeros(flat.size)

    def val_f1(p: ModelParams, epoch: int) -> float:
        logits, _ = forward_with_operator(p, operator, g.features, mode="eval")
        if val_logits_transform is not None:
            logits = val_logits_transform(epoch, p, logits)
        pred = logits.argmax(axis=1)  # argmax ties resolve to the lowest index
        return evaluate(pred, labels, mask=val_mask,
                        num_classes=model_config.num_classes).f1_macro

    start = time.perf_counter()
    best_metric = val_f1(params, 0)
    best_epoch = 0
    best_flat = flat.copy()
    loss_curve: list[float] = []
    val_curve: list[float] = [best_metric]

    epoch = 0
    for epoch in range(1, train_config.max_epochs + 1):
        try:
            loss, grad = loss_and_gradients(
                params.from_flat(flat), g, labels, train_mask,
                weight_decay=train_config.weight_decay,
                mode="train",
                dropout_seed=train_config.seed * 1_000_003 + epoch,
                operator=operator,
            )
        except NumericError as exc:
            raise TrainingFailureError(
                f"training diverged at epoch {epoch}: {exc}", epoch=epoch
            ) from exc
        if not np.isfinite(loss):
            raise TrainingFailureError(
                f"non-finite loss at epoch {epoch}", epoch=epoch
            )
        flat, state = adam_step(state, flat, grad, train_config.learning_rate)
        loss_curve.append(loss)

        metric = val_f1(params.from_flat(flat), epoch)
        val_curve.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_flat = flat.copy()
        if epoch - best_epoch >= train_config.patience:
            break

    report = TrainReport(
        epochs_run=epoch,
        best_epoch=best_epoch,
        loss_curve=tuple(loss_curve),
        val_metric_curve=tuple(val_curve),
        wall_time_seconds=time.perf_counter() - start,
    )
    return params.from_flat(best_flat), report
