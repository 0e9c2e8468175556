"""Loss, optimizers and the full-batch training loop.

Outputs are turned into class probabilities with a softmax before the
cross-entropy, since the raw output states (relu in the reference
experiments) are not normalized. Training is full batch: one gradient
and one optimizer step per epoch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fop import error_gradient, forward_with_grad
from .network import Model, NumericOverflowError, forward_outputs


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 0.001
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    clamp_inputs: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


@dataclass
class AdamState:
    """First and second moment estimates plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros((n, n)), v=np.zeros((n, n)))


@dataclass
class Metrics:
    """Per-epoch mean training loss and training accuracy.

    The loss at epoch e is the full-batch loss whose gradient drove that
    epoch's update; the accuracy is measured after the update, so the
    final row reflects the returned model.
    """

    loss: np.ndarray
    accuracy: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "accuracy"])
            for e, (l, a) in enumerate(zip(self.loss, self.accuracy), start=1):
                writer.writerow([e, format(l, ".17g"), format(a, ".17g")])


def softmax_cross_entropy(y: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Stable softmax cross-entropy loss and its derivative w.r.t. y.

    Returns (loss, p - onehot(label)) where p is the softmax of y.
    """
    y = np.asarray(y, dtype=np.float64)
    if not 0 <= label < y.shape[0]:
        raise ValueError(f"label {label} out of range for {y.shape[0]} outputs")
    shifted = y - y.max()
    exp = np.exp(shifted)
    denom = exp.sum()
    loss = -(shifted[label] - np.log(denom))
    dEdy = exp / denom
    dEdy[label] -= 1.0
    return float(loss), dEdy


def _batch_grad_numpy(model: Model, features: np.ndarray, labels: np.ndarray):
    """Reference batch pass: per-sample forward_with_grad in batch order."""
    n = model.shape.total
    grad_sum = np.zeros((n, n))
    loss_sum = 0.0
    for x, label in zip(features, labels):
        trace, d = forward_with_grad(model, x)
        y = trace.states[-1, n - model.shape.output_count :]
        loss, dEdy = softmax_cross_entropy(y, int(label))
        loss_sum += loss
        grad_sum += error_gradient(dEdy, d, model.shape)
    return loss_sum, grad_sum


def batch_gradient(model: Model, features: np.ndarray, labels: np.ndarray):
    """Mean loss and mean masked error gradient over a batch.

    Per-sample losses and gradients are accumulated in dataset order;
    the result is their arithmetic mean with forbidden positions zeroed.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if features.shape[0] == 0:
        raise ValueError("batch is empty")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree on batch size")
    if features.shape[1] != model.shape.feature_count:
        raise ValueError(
            f"expected {model.shape.feature_count} features, got {features.shape[1]}"
        )
    if labels.min() < 0 or labels.max() >= model.shape.output_count:
        raise ValueError("label out of range for the model's output count")
    if kernels.active_backend() == "numba":
        loss_sum, grad_sum = kernels.batch_grad_numba(model, features, labels)
    else:
        loss_sum, grad_sum = _batch_grad_numpy(model, features, labels)
    batch = features.shape[0]
    mean_loss = loss_sum / batch
    if not np.isfinite(mean_loss):
        raise NumericOverflowError("non-finite batch loss")
    grad = grad_sum / batch
    grad *= model.mask
    return mean_loss, grad


def sgd_step(model: Model, grad: np.ndarray, lr: float) -> Model:
    """Plain gradient descent update, in place."""
    update = lr * grad
    if not np.isfinite(update).all():
        raise NumericOverflowError("non-finite sgd update")
    model.weights -= update
    return model


def adam_step(state: AdamState, model: Model, grad: np.ndarray, cfg: TrainConfig):
    """One Adam update with bias correction, in place.

    Masked positions receive zero gradient, so their moments and weights
    stay exactly zero.
    """
    state.step_count += 1
    state.m *= cfg.beta1
    state.m += (1.0 - cfg.beta1) * grad
    state.v *= cfg.beta2
    state.v += (1.0 - cfg.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - cfg.beta1 ** state.step_count)
    v_hat = state.v / (1.0 - cfg.beta2 ** state.step_count)
    update = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    if not np.isfinite(update).all():
        raise NumericOverflowError("non-finite adam update")
    model.weights -= update
    return state, model


def evaluate(model: Model, data) -> float:
    """Fraction of samples whose argmax output matches the label.

    Ties resolve toward the lowest output index.
    """
    outputs = forward_outputs(model, data.features)
    predicted = np.argmax(outputs, axis=1)
    return float(np.mean(predicted == data.labels))


def train(model: Model, data, cfg: TrainConfig) -> tuple[Model, Metrics]:
    """Full-batch training for ``cfg.epochs`` epochs.

    The input model is left untouched; a trained copy is returned along
    with per-epoch metrics. Aborts with a diagnostic if the loss leaves
    the finite range.
    """
    if len(data.labels) == 0:
        raise ValueError("training data is empty")
    model = model.copy()
    n = model.shape.total
    state = AdamState.zeros(n)
    loss_hist = np.empty(cfg.epochs)
    acc_hist = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        try:
            loss, grad = batch_gradient(model, data.features, data.labels)
        except NumericOverflowError as exc:
            raise NumericOverflowError(
                f"training diverged at epoch {epoch + 1}: {exc}"
            ) from exc
        if cfg.optimizer == "adam":
            adam_step(state, model, grad, cfg)
        else:
            sgd_step(model, grad, cfg.learning_rate)
        loss_hist[epoch] = loss
        acc_hist[epoch] = evaluate(model, data)
    return model, Metrics(loss=loss_hist, accuracy=acc_hist)
