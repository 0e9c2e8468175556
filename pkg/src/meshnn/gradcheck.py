"""Finite-difference gradient oracle.

This is the ground-truth mechanism for the forward-propagated gradients:
it perturbs each allowed weight in turn and runs the plain forward pass,
never touching the gradient propagation code. Central differences give
the second-order accuracy needed for 1e-5 relative tolerances in double
precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import Model, forward, readout
from .training import softmax_cross_entropy


def finite_diff_gradient(
    model: Model,
    x: np.ndarray,
    label: int | None = None,
    h: float = 1e-6,
    loss_fn: Callable[[np.ndarray], float] | None = None,
) -> np.ndarray:
    """Central-difference gradient of the scalar loss w.r.t. each allowed weight.

    The loss defaults to softmax cross-entropy against ``label``; a
    custom ``loss_fn(outputs) -> float`` may be supplied instead. Masked
    positions are left at zero.
    """
    if h <= 0:
        raise ValueError(f"h must be > 0, got {h}")
    if loss_fn is None:
        if label is None:
            raise ValueError("need a label when no loss_fn is given")

        def loss_fn(y):
            return softmax_cross_entropy(y, label)[0]

    def loss_at(weights: np.ndarray) -> float:
        probe = Model(
            shape=model.shape,
            weights=weights,
            mask=model.mask,
            act_codes=model.act_codes,
            clamp_inputs=model.clamp_inputs,
        )
        value = loss_fn(readout(forward(probe, x), model.shape))
        if not np.isfinite(value):
            raise FloatingPointError("non-finite loss at perturbed weights")
        return value

    n = model.shape.total
    grad = np.zeros((n, n))
    for i, j in np.argwhere(model.mask == 1):
        perturbed = model.weights.copy()
        perturbed[i, j] = model.weights[i, j] + h
        up = loss_at(perturbed)
        perturbed[i, j] = model.weights[i, j] - h
        down = loss_at(perturbed)
        grad[i, j] = (up - down) / (2.0 * h)
    return grad


@dataclass
class CompareReport:
    max_rel_err: float
    worst_index: tuple[int, int]
    passed: bool
    rel_tol: float

    def as_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "worst_index": list(self.worst_index),
            "pass": self.passed,
            "rel_tol": self.rel_tol,
        }


def compare(g: np.ndarray, g_fd: np.ndarray, rel_tol: float = 1e-5) -> CompareReport:
    """Entrywise relative comparison of two gradient matrices.

    rel_err = |a - b| / max(|a|, |b|, 1e-8); passes when the worst entry
    is within ``rel_tol``.
    """
    g = np.asarray(g, dtype=np.float64)
    g_fd = np.asarray(g_fd, dtype=np.float64)
    if g.shape != g_fd.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {g_fd.shape}")
    denom = np.maximum(np.maximum(np.abs(g), np.abs(g_fd)), 1e-8)
    rel = np.abs(g - g_fd) / denom
    worst_flat = int(np.argmax(rel))
    worst = np.unravel_index(worst_flat, rel.shape)
    max_rel = float(rel[worst])
    return CompareReport(
        max_rel_err=max_rel,
        worst_index=(int(worst[0]), int(worst[1])),
        passed=bool(max_rel <= rel_tol),
        rel_tol=rel_tol,
    )
