"""Forward-only gradient propagation.

State gradients are carried alongside the state update in a rank-3
tensor D with D[i, j, o] = dS_n[o] / dA[i, j]. Each tick applies

    D <- phi'(T) * (D . A + seed)

where ``D . A`` contracts the output axis of D with the rows of A (one
dense (N^2 x N) by (N x N) matrix product) and ``seed`` injects the
direct dependence of the new state on A: seed[i, j, o] = S_prev[i] when
o == j, else 0. The seed is never materialized; it lands as a rank-1
update on the o == j diagonal slices. No backward pass, no tape: only
the current tensor and one scratch buffer of the same size are alive at
any point, regardless of how many ticks the network runs.

Per sample this costs O(ticks * N^4) time and O(N^3) space.
"""

from __future__ import annotations

import numpy as np

from .network import (
    ForwardTrace,
    Model,
    NetworkShape,
    NumericOverflowError,
    _clamp,
    _initial_state,
    apply_activations,
)

# Counter for rank-3 buffer allocations, used by the memory-contract
# tests: forward_with_grad must allocate exactly two regardless of ticks.
_tensor_allocs = 0


def tensor_alloc_count() -> int:
    return _tensor_allocs


def reset_tensor_alloc_count() -> None:
    global _tensor_allocs
    _tensor_allocs = 0


def _alloc_tensor(n: int) -> np.ndarray:
    global _tensor_allocs
    _tensor_allocs += 1
    return np.zeros((n, n, n))


def contract(d: np.ndarray, weights: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Contract the output axis of a gradient tensor with the weight matrix.

    result[i, j, o] = sum_k d[i, j, k] * weights[k, o], computed as one
    dense matrix product of the (N^2 x N) flattening of ``d``.
    """
    n = weights.shape[0]
    if weights.shape != (n, n) or d.shape != (n, n, n):
        raise ValueError(f"dimension mismatch: d {d.shape} vs weights {weights.shape}")
    if out is None:
        out = _alloc_tensor(n)
    np.matmul(d.reshape(n * n, n), weights, out=out.reshape(n * n, n))
    return out


def fop_step(
    model: Model,
    s_prev: np.ndarray,
    t_pre: np.ndarray,
    d_prev: np.ndarray,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Advance the gradient tensor by one tick.

    ``s_prev`` is the state that produced the pre-activation ``t_pre``;
    ``d_prev`` is the gradient tensor of that state. ``out`` may supply
    a reusable buffer (it must not alias ``d_prev``).
    """
    n = model.shape.total
    s_prev = np.asarray(s_prev, dtype=np.float64)
    t_pre = np.asarray(t_pre, dtype=np.float64)
    if s_prev.shape != (n,) or t_pre.shape != (n,):
        raise ValueError("state and pre-activation must have length N")
    out = contract(d_prev, model.weights, out=out)
    diag = np.arange(n)
    out[:, diag, diag] += s_prev[:, None]
    _, derivs = apply_activations(model.act_codes, t_pre)
    out *= derivs
    if model.clamp_inputs:
        out[:, :, : model.shape.input_count] = 0.0
    if not np.isfinite(out).all():
        raise NumericOverflowError("non-finite gradient tensor")
    return out


def forward_with_grad(model: Model, x: np.ndarray) -> tuple[ForwardTrace, np.ndarray]:
    """Forward pass computing states and state gradients in the same loop.

    Returns the trace and the final-tick gradient tensor. Only two
    rank-3 buffers are ever live; they are swapped between ticks.
    """
    shape = model.shape
    n = shape.total
    x = np.asarray(x, dtype=np.float64).ravel()
    s = _initial_state(shape, x)
    states = np.empty((shape.ticks, n))
    preacts = np.empty((max(shape.ticks - 1, 0), n))
    states[0] = s
    d = _alloc_tensor(n)
    scratch = _alloc_tensor(n)
    for tick in range(1, shape.ticks):
        t_pre = s @ model.weights
        scratch = fop_step(model, s, t_pre, d, out=scratch)
        d, scratch = scratch, d
        s, _ = apply_activations(model.act_codes, t_pre)
        if model.clamp_inputs:
            _clamp(s, shape, x)
        if not np.isfinite(s).all():
            raise NumericOverflowError(f"non-finite state at tick {tick}")
        preacts[tick - 1] = t_pre
        states[tick] = s
    trace = ForwardTrace(states=states, preacts=preacts, inputs=x.copy())
    return trace, d


def error_gradient(
    dEdy: np.ndarray,
    d: np.ndarray,
    shape: NetworkShape,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Contract the loss derivative with the output slices of the tensor.

    G[i, j] = sum_o dEdy[o] * d[i, j, N - O + o]. When a mask is given,
    gradients at forbidden positions are zeroed.
    """
    n = shape.total
    dEdy = np.asarray(dEdy, dtype=np.float64)
    if dEdy.shape != (shape.output_count,):
        raise ValueError(f"dEdy must have length {shape.output_count}, got {dEdy.shape}")
    if d.shape != (n, n, n):
        raise ValueError(f"gradient tensor must be {n}x{n}x{n}, got {d.shape}")
    g = d[:, :, n - shape.output_count :] @ dEdy
    if mask is not None:
        g *= mask
    return g
