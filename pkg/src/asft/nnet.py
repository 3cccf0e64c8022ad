"""Flat-parameter feedforward layers with exact reverse-mode gradients, plus Adam.

Model weights live in one flat float64 vector; each layer is described by a
``LayerSpec`` giving its offsets into that vector.  The stochastic/deterministic
split of the parameter space is an index mask over the same vector
(``ParamPartition``), fixed at model construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

_ACTIVATIONS = ("tanh", "linear")


@dataclass(frozen=True)
class LayerSpec:
    """Affine layer ``act(x @ W + b)`` stored flat at the given offsets.

    W has shape (in_dim, out_dim) laid out row-major; b follows with out_dim
    entries.
    """

    name: str
    in_dim: int
    out_dim: int
    w_offset: int
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def b_offset(self) -> int:
        return self.w_offset + self.in_dim * self.out_dim

    @property
    def size(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim

    def weights(self, values: np.ndarray) -> np.ndarray:
        return values[self.w_offset : self.b_offset].reshape(self.in_dim, self.out_dim)

    def bias(self, values: np.ndarray) -> np.ndarray:
        return values[self.b_offset : self.b_offset + self.out_dim]


def plan_layers(specs: list[tuple[str, int, int, str]]) -> tuple[tuple[LayerSpec, ...], int]:
    """Assign contiguous offsets to (name, in_dim, out_dim, activation) tuples."""
    layers = []
    offset = 0
    for name, in_dim, out_dim, activation in specs:
        layer = LayerSpec(name, in_dim, out_dim, offset, activation)
        layers.append(layer)
        offset += layer.size
    return tuple(layers), offset


@dataclass
class ParamPartition:
    """Flat parameter vector with a fixed stochastic-index mask.

    ``stochastic_idx`` selects the stochastic block (the decoder for the toy
    VAE); everything else is the deterministic block, frozen during subspace
    work.
    """

    values: np.ndarray
    stochastic_idx: np.ndarray
    layout: tuple[LayerSpec, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.stochastic_idx = np.asarray(self.stochastic_idx, dtype=np.intp)
        if self.stochastic_idx.size == 0:
            raise ValueError("stochastic block must be nonempty")
        if np.unique(self.stochastic_idx).size != self.stochastic_idx.size:
            raise ValueError("stochastic mask indices must be unique")
        if self.stochastic_idx.min() < 0 or self.stochastic_idx.max() >= self.values.size:
            raise ValueError("stochastic mask index out of range")

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @property
    def stochastic_dim(self) -> int:
        return int(self.stochastic_idx.size)

    def stochastic_values(self) -> np.ndarray:
        return self.values[self.stochastic_idx].copy()

    def with_stochastic(self, theta_s: np.ndarray) -> np.ndarray:
        """Full parameter vector with the stochastic block replaced."""
        theta_s = np.asarray(theta_s, dtype=np.float64)
        if theta_s.shape != (self.stochastic_dim,):
            raise DimensionError(
                f"stochastic block has length {self.stochastic_dim}, got {theta_s.shape}"
            )
        full = self.values.copy()
        full[self.stochastic_idx] = theta_s
        return full


def layer_forward(values: np.ndarray, spec: LayerSpec, x: np.ndarray) -> np.ndarray:
    pre = x @ spec.weights(values) + spec.bias(values)
    return np.tanh(pre) if spec.activation == "tanh" else pre


def layer_backward(
    values: np.ndarray,
    spec: LayerSpec,
    x_in: np.ndarray,
    out: np.ndarray,
    d_out: np.ndarray,
    grad: np.ndarray,
) -> np.ndarray:
    """Accumulate parameter gradients into ``grad`` and return d(loss)/d(x_in).

    ``x_in``/``out`` are the cached layer input and output; batched inputs sum
    their parameter gradients over the leading axis.
    """
    d_pre = d_out * (1.0 - out * out) if spec.activation == "tanh" else d_out
    w = spec.weights(values)
    gw = grad[spec.w_offset : spec.b_offset].reshape(spec.in_dim, spec.out_dim)
    gb = grad[spec.b_offset : spec.b_offset + spec.out_dim]
    if x_in.ndim == 1:
        gw += np.outer(x_in, d_pre)
        gb += d_pre
    else:
        gw += x_in.T @ d_pre
        gb += d_pre.sum(axis=0)
    return d_pre @ w.T


def mlp_forward(values: np.ndarray, layers: tuple[LayerSpec, ...], x: np.ndarray) -> np.ndarray:
    """Run a chain of layers; x may be a single vector or a (batch, in_dim) array."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layers[0].in_dim:
        raise DimensionError(
            f"input width {x.shape[-1]} does not match layer width {layers[0].in_dim}"
        )
    for spec in layers:
        x = layer_forward(values, spec, x)
    return x


def mlp_forward_cached(
    values: np.ndarray, layers: tuple[LayerSpec, ...], x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping per-layer inputs/outputs for the backward pass."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layers[0].in_dim:
        raise DimensionError(
            f"input width {x.shape[-1]} does not match layer width {layers[0].in_dim}"
        )
    acts = [x]
    for spec in layers:
        x = layer_forward(values, spec, x)
        acts.append(x)
    return x, acts


def mlp_backward(
    values: np.ndarray,
    layers: tuple[LayerSpec, ...],
    acts: list[np.ndarray],
    d_out: np.ndarray,
    grad: np.ndarray,
) -> np.ndarray:
    """Reverse pass over a cached forward; accumulates into grad, returns d(input)."""
    for i in reversed(range(len(layers))):
        d_out = layer_backward(values, layers[i], acts[i], acts[i + 1], d_out, grad)
    return d_out


def check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {where}")


@dataclass
class AdamState:
    """Bias-corrected Adam, operating on whatever flat slice it is given."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One Adam update; mutates ``state`` in place and returns the new parameters."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise DimensionError(f"params {params.shape} and grads {grads.shape} differ")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
