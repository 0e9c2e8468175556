"""Compiled hot kernel for the batched gradient pass.

The per-sample tensor recurrence dominates training time, so it is
compiled with numba when available. The pure-numpy reference path (the
per-sample composition of the public forward/gradient operations) lives
in :mod:`meshnn.training`; which path runs is chosen by the
``MESHNN_BACKEND`` environment variable:

    MESHNN_BACKEND=auto    numba if importable, numpy otherwise (default)
    MESHNN_BACKEND=numba   require the compiled kernel
    MESHNN_BACKEND=numpy   force the reference path

``benchmarks/bench_fop.py`` compares the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

ENV_VAR = "MESHNN_BACKEND"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


def _resolve_backend(choice: str) -> str:
    choice = choice.strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("MESHNN_BACKEND=numba but numba is not importable")
        return "numba"
    if choice == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    raise ValueError(f"unknown backend {choice!r} (expected auto, numba or numpy)")


_backend = _resolve_backend(os.environ.get(ENV_VAR, "auto"))


def active_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Override the backend at runtime (used by tests and benchmarks)."""
    global _backend
    _backend = _resolve_backend(name)
    return _backend


@njit(cache=True)
def _phi(code, v):
    # codes: 0 identity, 1 relu, 2 tanh, 3 sigmoid; relu'(0) is 0
    if code == 0:
        return v, 1.0
    if code == 1:
        if v > 0.0:
            return v, 1.0
        return 0.0, 0.0
    if code == 2:
        t = math.tanh(v)
        return t, 1.0 - t * t
    if v >= 0.0:
        s = 1.0 / (1.0 + math.exp(-v))
    else:
        e = math.exp(v)
        s = e / (1.0 + e)
    return s, s * (1.0 - s)


@njit(cache=True)
def _fop_batch(weights, act_codes, x_batch, labels, input_count, output_count, ticks, clamp):
    """Summed loss and summed (unmasked) error gradient over a batch.

    Samples are processed sequentially in batch order; the gradient
    tensor d lives in one flattened (N^2 x N) buffer reused throughout.
    """
    n = weights.shape[0]
    batch = x_batch.shape[0]
    n_feat = input_count - 1
    out_base = n - output_count
    grad_sum = np.zeros((n, n))
    d = np.zeros((n * n, n))
    s = np.zeros(n)
    s_new = np.zeros(n)
    phid = np.zeros(n)
    dedy = np.zeros(output_count)
    loss_sum = 0.0
    for b in range(batch):
        for k in range(n):
            s[k] = 0.0
        for k in range(n_feat):
            s[k] = x_batch[b, k]
        s[input_count - 1] = 1.0
        d[:, :] = 0.0
        for _ in range(1, ticks):
            t_pre = np.dot(s, weights)
            c = np.dot(d, weights)
            for i in range(n):
                row = i * n
                si = s[i]
                for j in range(n):
                    c[row + j, j] += si
            for o in range(n):
                val, der = _phi(act_codes[o], t_pre[o])
                s_new[o] = val
                phid[o] = der
            for r in range(n * n):
                for o in range(n):
                    d[r, o] = c[r, o] * phid[o]
            if clamp:
                for r in range(n * n):
                    for o in range(input_count):
                        d[r, o] = 0.0
                for k in range(n_feat):
                    s_new[k] = x_batch[b, k]
                s_new[input_count - 1] = 1.0
            for k in range(n):
                s[k] = s_new[k]
        m = s[out_base]
        for o in range(1, output_count):
            if s[out_base + o] > m:
                m = s[out_base + o]
        denom = 0.0
        for o in range(output_count):
            denom += math.exp(s[out_base + o] - m)
        label = labels[b]
        loss_sum += -(s[out_base + label] - m - math.log(denom))
        for o in range(output_count):
            p = math.exp(s[out_base + o] - m) / denom
            if o == label:
                dedy[o] = p - 1.0
            else:
                dedy[o] = p
        for i in range(n):
            row = i * n
            for j in range(n):
                acc = 0.0
                for o in range(output_count):
                    acc += dedy[o] * d[row + j, out_base + o]
                grad_sum[i, j] += acc
    return loss_sum, grad_sum


def batch_grad_numba(model, features, labels) -> tuple[float, np.ndarray]:
    """Run the compiled batch kernel for a model (see _fop_batch)."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    loss_sum, grad_sum = _fop_batch(
        model.weights,
        model.act_codes,
        features,
        labels,
        model.shape.input_count,
        model.shape.output_count,
        model.shape.ticks,
        model.clamp_inputs,
    )
    return float(loss_sum), grad_sum
