"""Mesh network data model and forward state propagation.

A mesh network is a set of N neurons wired by a single N x N adjacency
weight matrix: entry (i, j) is the synaptic weight from neuron i to
neuron j. Neurons are ordered inputs first, hidden next, outputs last,
so the network output is a suffix slice of the state vector. The state
evolves in discrete ticks: S_n = phi(S_{n-1} A), with input neurons
(features plus a constant bias of 1) optionally re-clamped every tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATION_CODES = {"identity": 0, "relu": 1, "tanh": 2, "sigmoid": 3}
_CODE_NAMES = {v: k for k, v in ACTIVATION_CODES.items()}


class NumericOverflowError(FloatingPointError):
    """State or loss values left the representable floating-point range."""


@dataclass(frozen=True)
class NetworkShape:
    """Neuron counts and tick budget of a mesh network.

    ``input_count`` includes the bias neuron (always the last input,
    index ``input_count - 1``), so a network fed F features has
    ``input_count = F + 1``. ``ticks`` counts states including the
    initial one: 3 ticks means two propagation steps.
    """

    input_count: int
    hidden_count: int
    output_count: int
    ticks: int

    def __post_init__(self):
        if self.input_count < 2:
            raise ValueError(
                f"input_count must be >= 2 (features plus bias), got {self.input_count}"
            )
        if self.hidden_count < 0:
            raise ValueError(f"hidden_count must be >= 0, got {self.hidden_count}")
        if self.output_count < 1:
            raise ValueError(f"output_count must be >= 1, got {self.output_count}")
        if self.ticks < 1:
            raise ValueError(f"ticks must be >= 1, got {self.ticks}")

    @property
    def total(self) -> int:
        return self.input_count + self.hidden_count + self.output_count

    @property
    def feature_count(self) -> int:
        return self.input_count - 1


def activation_codes(activation: str | Sequence[str], n: int) -> np.ndarray:
    """Resolve an activation tag (or one tag per neuron) to an int code array."""
    if isinstance(activation, str):
        tags = [activation] * n
    else:
        tags = list(activation)
        if len(tags) != n:
            raise ValueError(f"expected {n} activation tags, got {len(tags)}")
    codes = np.empty(n, dtype=np.int64)
    for k, tag in enumerate(tags):
        try:
            codes[k] = ACTIVATION_CODES[tag]
        except KeyError:
            raise ValueError(f"unknown activation tag {tag!r}") from None
    return codes


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation_eval(tag: str, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate an element-wise activation and its derivative in one pass.

    The relu derivative at 0 is defined as 0, so a zero pre-activation
    contributes exactly zero gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    if tag == "identity":
        return x.copy(), np.ones_like(x)
    if tag == "relu":
        return np.maximum(x, 0.0), (x > 0.0).astype(np.float64)
    if tag == "tanh":
        t = np.tanh(x)
        return t, 1.0 - t * t
    if tag == "sigmoid":
        s = _stable_sigmoid(x)
        return s, s * (1.0 - s)
    raise ValueError(f"unknown activation tag {tag!r}")


def apply_activations(codes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-neuron activation over the last axis of ``x``.

    ``codes[k]`` selects the activation of neuron k; ``x[..., k]`` is its
    pre-activation. Returns (values, derivatives) of the same shape.
    """
    values = np.empty_like(x)
    derivs = np.empty_like(x)
    for code in np.unique(codes):
        cols = codes == code
        v, d = activation_eval(_CODE_NAMES[int(code)], x[..., cols])
        values[..., cols] = v
        derivs[..., cols] = d
    return values, derivs


@dataclass
class Model:
    """A mesh network: shape, adjacency weights, connection mask, activations.

    ``mask[i, j] = 0`` marks a forbidden connection; the corresponding
    weight is structurally zero and stays zero through training. Mask
    columns for input neurons are all zero: nothing feeds an input.
    With ``clamp_inputs`` (the default) the input neuron states are
    overwritten with (features, 1) after every tick, which keeps the
    bias neuron at its constant value; without it the inputs follow the
    literal update rule and decay to phi(0) after the first step.
    """

    shape: NetworkShape
    weights: np.ndarray
    mask: np.ndarray
    act_codes: np.ndarray
    clamp_inputs: bool = True

    def __post_init__(self):
        n = self.shape.total
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        self.act_codes = np.ascontiguousarray(self.act_codes, dtype=np.int64)
        if self.weights.shape != (n, n):
            raise ValueError(f"weights must be {n}x{n}, got {self.weights.shape}")
        if self.mask.shape != (n, n):
            raise ValueError(f"mask must be {n}x{n}, got {self.mask.shape}")
        if self.act_codes.shape != (n,):
            raise ValueError(f"need {n} activation codes, got {self.act_codes.shape}")
        validate_mask(self.mask, self.shape)
        if not np.isfinite(self.weights).all():
            raise ValueError("weights contain non-finite entries")
        bad = (self.mask == 0) & (self.weights != 0.0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"nonzero weight at masked position ({i}, {j})")

    @property
    def activation(self) -> str | tuple[str, ...]:
        tags = tuple(_CODE_NAMES[int(c)] for c in self.act_codes)
        return tags[0] if len(set(tags)) == 1 else tags

    def copy(self) -> "Model":
        return Model(
            shape=self.shape,
            weights=self.weights.copy(),
            mask=self.mask.copy(),
            act_codes=self.act_codes.copy(),
            clamp_inputs=self.clamp_inputs,
        )


@dataclass
class ForwardTrace:
    """States and pre-activations recorded over one forward run.

    ``states[n]`` is S_n for n in [0, ticks); ``preacts[n - 1]`` is the
    pre-activation T_n that produced S_n for n >= 1.
    """

    states: np.ndarray
    preacts: np.ndarray
    inputs: np.ndarray

    @property
    def ticks(self) -> int:
        return self.states.shape[0]


def validate_mask(mask: np.ndarray, shape: NetworkShape) -> None:
    n = shape.total
    mask = np.asarray(mask)
    if mask.shape != (n, n):
        raise ValueError(f"mask must be {n}x{n}, got {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    if mask[:, : shape.input_count].any():
        j = int(np.argwhere(mask[:, : shape.input_count].any(axis=0))[0])
        raise ValueError(f"mask column {j} feeds an input neuron; input columns must be zero")


def default_mask(shape: NetworkShape) -> np.ndarray:
    """Dense experiment topology: inputs feed hidden and outputs, hidden
    neurons feed each other (no self loops) and the outputs, outputs feed
    back into the hidden block."""
    n = shape.total
    i, h, o = shape.input_count, shape.hidden_count, shape.output_count
    mask = np.zeros((n, n), dtype=np.uint8)
    mask[:i, i:] = 1
    mask[i : i + h, i:] = 1
    mask[n - o :, i : i + h] = 1
    np.fill_diagonal(mask, 0)
    return mask


def build_model(
    shape: NetworkShape,
    mask: np.ndarray,
    init: str = "uniform",
    seed: int = 0,
    activation: str | Sequence[str] = "relu",
    clamp_inputs: bool = True,
) -> Model:
    """Create a model with freshly initialized weights.

    ``init`` is ``"uniform"`` (i.i.d. uniform on (-sqrt(6/N), +sqrt(6/N))
    at unmasked positions) or ``"zero"``. The same (shape, mask, init,
    seed) always yields a bit-identical weight matrix.
    """
    n = shape.total
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    validate_mask(mask, shape)
    if init == "zero":
        weights = np.zeros((n, n))
    elif init == "uniform":
        bound = np.sqrt(6.0 / n)
        rng = np.random.default_rng(seed)
        weights = rng.uniform(-bound, bound, size=(n, n))
        weights *= mask
    else:
        raise ValueError(f"unknown init {init!r} (expected 'uniform' or 'zero')")
    return Model(
        shape=shape,
        weights=weights,
        mask=mask,
        act_codes=activation_codes(activation, n),
        clamp_inputs=clamp_inputs,
    )


def from_mlp_layers(
    blocks: Sequence[np.ndarray],
    activation: str | Sequence[str] = "relu",
    clamp_inputs: bool = False,
) -> Model:
    """Embed a stack of dense layer matrices as a block adjacency matrix.

    Layer l with weight matrix W_l (rows = units of layer l, cols =
    units of layer l+1) occupies the block just right of the diagonal;
    everything else is zero. Running the mesh for len(blocks) + 1 ticks
    with clamping off reproduces the layer-by-layer evaluation.
    """
    if not blocks:
        raise ValueError("need at least one layer weight matrix")
    blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
    for b in blocks:
        if b.ndim != 2:
            raise ValueError("layer weights must be 2-d matrices")
    widths = [blocks[0].shape[0]] + [b.shape[1] for b in blocks]
    for l, b in enumerate(blocks):
        if b.shape[0] != widths[l]:
            raise ValueError(
                f"layer {l} has {b.shape[0]} rows but layer {l - 1} outputs {widths[l]}"
            )
    n = sum(widths)
    shape = NetworkShape(
        input_count=widths[0],
        hidden_count=n - widths[0] - widths[-1],
        output_count=widths[-1],
        ticks=len(blocks) + 1,
    )
    weights = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=np.uint8)
    offset = 0
    for b, width in zip(blocks, widths):
        rows = slice(offset, offset + width)
        cols = slice(offset + width, offset + width + b.shape[1])
        weights[rows, cols] = b
        mask[rows, cols] = 1
        offset += width
    return Model(
        shape=shape,
        weights=weights,
        mask=mask,
        act_codes=activation_codes(activation, n),
        clamp_inputs=clamp_inputs,
    )


def _initial_state(shape: NetworkShape, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != shape.feature_count:
        raise ValueError(f"expected {shape.feature_count} features, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise ValueError("input features contain non-finite values")
    s = np.zeros(shape.total)
    s[: shape.feature_count] = x
    s[shape.input_count - 1] = 1.0
    return s


def _clamp(s: np.ndarray, shape: NetworkShape, x: np.ndarray) -> None:
    s[..., : shape.feature_count] = x
    s[..., shape.input_count - 1] = 1.0


def step(model: Model, s: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One state transition: T = S A, S' = phi(T), inputs re-clamped if enabled."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (model.shape.total,):
        raise ValueError(f"state must have length {model.shape.total}, got {s.shape}")
    t_pre = s @ model.weights
    s_next, _ = apply_activations(model.act_codes, t_pre)
    if model.clamp_inputs:
        _clamp(s_next, model.shape, np.asarray(x, dtype=np.float64).ravel())
    return t_pre, s_next


def forward(model: Model, x: np.ndarray) -> ForwardTrace:
    """Run the state update for the model's tick budget, recording the trace."""
    shape = model.shape
    x = np.asarray(x, dtype=np.float64).ravel()
    s = _initial_state(shape, x)
    states = np.empty((shape.ticks, shape.total))
    preacts = np.empty((max(shape.ticks - 1, 0), shape.total))
    states[0] = s
    for n in range(1, shape.ticks):
        t_pre, s = step(model, s, x)
        if not np.isfinite(s).all():
            raise NumericOverflowError(f"non-finite state at tick {n}")
        preacts[n - 1] = t_pre
        states[n] = s
    return ForwardTrace(states=states, preacts=preacts, inputs=x.copy())


def readout(trace: ForwardTrace, shape: NetworkShape) -> np.ndarray:
    """Output vector: the final state restricted to the output neurons."""
    if trace.states.shape != (shape.ticks, shape.total):
        raise ValueError(
            f"trace has states of shape {trace.states.shape}, "
            f"expected {(shape.ticks, shape.total)}"
        )
    return trace.states[-1, shape.total - shape.output_count :].copy()


def forward_outputs(model: Model, features: np.ndarray) -> np.ndarray:
    """Vectorized forward pass over a batch: returns the (B, O) output block."""
    shape = model.shape
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != shape.feature_count:
        raise ValueError(
            f"expected {shape.feature_count} features per sample, got {features.shape[1]}"
        )
    s = np.zeros((features.shape[0], shape.total))
    s[:, : shape.feature_count] = features
    s[:, shape.input_count - 1] = 1.0
    for _ in range(1, shape.ticks):
        t_pre = s @ model.weights
        s, _ = apply_activations(model.act_codes, t_pre)
        if model.clamp_inputs:
            _clamp(s, shape, features)
    if not np.isfinite(s).all():
        raise NumericOverflowError("non-finite state in batched forward pass")
    return s[:, shape.total - shape.output_count :]
