"""Model graph: layer list validation, init, forward/backward, serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import layers as L


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer list with a fixed input width and output dimension."""

    layers: tuple[L.LayerSpec, ...]
    input_len: int
    output_dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        shape = self._walk_shapes()
        if shape != (self.output_dim,):
            raise ValueError(f"model output shape {shape} != ({self.output_dim},)")

    def _walk_shapes(self):
        """Propagate the per-sample shape through the layer list."""
        shape: tuple[int, ...] = (1, self.input_len)
        for layer in self.layers:
            if isinstance(layer, L.Conv1D):
                if len(shape) != 2 or shape[0] != layer.in_channels:
                    raise ValueError(f"conv expects ({layer.in_channels}, len), got {shape}")
                shape = (layer.out_channels, L.conv_output_len(layer, shape[1]))
            elif isinstance(layer, L.Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, L.Dense):
                if shape != (layer.in_dim,):
                    raise ValueError(f"dense expects ({layer.in_dim},), got {shape}")
                shape = (layer.out_dim,)
            elif isinstance(layer, (L.Dropout, L.Activation)):
                pass
            else:
                raise TypeError(f"unknown layer {layer!r}")
        return shape

    def to_json(self) -> str:
        doc = {
            "input_len": self.input_len,
            "output_dim": self.output_dim,
            "layers": [_layer_doc(layer) for layer in self.layers],
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "ModelSpec":
        doc = json.loads(text)
        return ModelSpec(
            tuple(_layer_from_doc(d) for d in doc["layers"]),
            int(doc["input_len"]),
            int(doc["output_dim"]),
        )


def _layer_doc(layer: L.LayerSpec) -> dict:
    if isinstance(layer, L.Conv1D):
        return {
            "type": "conv1d",
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "kernel": layer.kernel,
            "stride": layer.stride,
            "padding": layer.padding,
        }
    if isinstance(layer, L.Dense):
        return {"type": "dense", "in_dim": layer.in_dim, "out_dim": layer.out_dim}
    if isinstance(layer, L.Dropout):
        return {"type": "dropout", "rate": layer.rate}
    if isinstance(layer, L.Flatten):
        return {"type": "flatten"}
    if isinstance(layer, L.Activation):
        return {"type": "activation", "kind": layer.kind}
    raise TypeError(f"unknown layer {layer!r}")


def _layer_from_doc(doc: dict) -> L.LayerSpec:
    kind = doc["type"]
    if kind == "conv1d":
        return L.Conv1D(
            doc["in_channels"], doc["out_channels"], doc["kernel"],
            doc.get("stride", 1), doc.get("padding", "same"),
        )
    if kind == "dense":
        return L.Dense(doc["in_dim"], doc["out_dim"])
    if kind == "dropout":
        return L.Dropout(doc["rate"])
    if kind == "flatten":
        return L.Flatten()
    if kind == "activation":
        return L.Activation(doc["kind"])
    raise ValueError(f"unknown layer type {kind!r}")


class ModelState:
    """Per-layer parameter dicts ({'w','b'} for conv/dense, {} otherwise)."""

    def __init__(self, params: list[dict[str, np.ndarray]]):
        self.params = params

    def flat(self) -> list[np.ndarray]:
        return [p[k] for p in self.params for k in ("w", "b") if k in p]

    def copy(self) -> "ModelState":
        return ModelState([{k: v.copy() for k, v in p.items()} for p in self.params])


def init_state(spec: ModelSpec, seed: int) -> ModelState:
    """Kaiming-uniform (fan-in, ReLU gain) weights, zero biases, seeded."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    params: list[dict[str, np.ndarray]] = []
    for layer in spec.layers:
        if isinstance(layer, L.Conv1D):
            fan_in = layer.in_channels * layer.kernel
            bound = np.sqrt(6.0 / fan_in)
            params.append({
                "w": rng.uniform(-bound, bound, (layer.out_channels, layer.in_channels, layer.kernel)),
                "b": np.zeros(layer.out_channels),
            })
        elif isinstance(layer, L.Dense):
            bound = np.sqrt(6.0 / layer.in_dim)
            params.append({
                "w": rng.uniform(-bound, bound, (layer.in_dim, layer.out_dim)),
                "b": np.zeros(layer.out_dim),
            })
        else:
            params.append({})
    return ModelState(params)


def forward(
    spec: ModelSpec,
    state: ModelState,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
):
    """Run the network on (batch, features) or (batch, channels, len) input."""
    if x.ndim == 2:
        x = x[:, None, :]
    if x.shape[2] != spec.input_len:
        raise ValueError(f"input width {x.shape[2]} != model input_len {spec.input_len}")
    caches = []
    out = x
    for layer, p in zip(spec.layers, state.params):
        if isinstance(layer, L.Conv1D):
            out, cache = L.conv1d_forward(out, p["w"], p["b"], layer)
        elif isinstance(layer, L.Dense):
            out, cache = L.dense_forward(out, p["w"], p["b"])
        elif isinstance(layer, L.Activation):
            if layer.kind == "relu":
                out, cache = L.relu_forward(out)
            else:
                cache = None
        elif isinstance(layer, L.Flatten):
            out, cache = L.flatten_forward(out)
        elif isinstance(layer, L.Dropout):
            out, cache = L.dropout_forward(out, layer.rate, mode, rng)
        caches.append(cache)
    return out, caches


def backward(spec: ModelSpec, state: ModelState, caches, grad_out: np.ndarray):
    """Backpropagate; returns per-layer gradient dicts mirroring state.params."""
    grads: list[dict[str, np.ndarray]] = [{} for _ in spec.layers]
    g = grad_out
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, cache = spec.layers[i], caches[i]
        if isinstance(layer, L.Conv1D):
            g, dw, db = L.conv1d_backward(g, cache, need_dx=i > 0)
            grads[i] = {"w": dw, "b": db}
        elif isinstance(layer, L.Dense):
            g, dw, db = L.dense_backward(g, cache)
            grads[i] = {"w": dw, "b": db}
        elif isinstance(layer, L.Activation):
            if layer.kind == "relu":
                g = L.relu_backward(g, cache)
        elif isinstance(layer, L.Flatten):
            g = L.flatten_backward(g, cache)
        elif isinstance(layer, L.Dropout):
            g = L.dropout_backward(g, cache)
    return g, grads


def flat_grads(spec: ModelSpec, grads: list[dict[str, np.ndarray]]) -> list[np.ndarray]:
    return [g[k] for g in grads for k in ("w", "b") if k in g]


def build_fishcnn(
    input_len: int,
    kernel: int = 64,
    filters: int = 16,
    hidden: tuple[int, int] = (128, 16),
    dropout_rate: float = 0.10,
    output_dim: int = 3,
) -> ModelSpec:
    """Two wide stride-1 conv layers, flatten+dropout, funnel FC head.

    Defaults give the stock configuration (16 filters of width 64, FC sizes
    128 -> 16 -> 3, 10% dropout on the flatten output); kernel is exposed for
    kernel-size studies.
    """
    if input_len < kernel:
        raise ValueError(f"input_len {input_len} must be >= kernel {kernel}")
    relu = L.Activation("relu")
    spec_layers = (
        L.Conv1D(1, filters, kernel, 1, "same"), relu,
        L.Conv1D(filters, filters, kernel, 1, "same"), relu,
        L.Flatten(),
        L.Dropout(dropout_rate),
        L.Dense(filters * input_len, hidden[0]), relu,
        L.Dense(hidden[0], hidden[1]), relu,
        L.Dense(hidden[1], output_dim), L.Activation("identity"),
    )
    return ModelSpec(spec_layers, input_len, output_dim)


def receptive_field(spec: ModelSpec) -> int:
    """1 + sum over conv layers of (kernel-1) * product of earlier strides."""
    rf = 1
    stride_prod = 1
    for layer in spec.layers:
        if isinstance(layer, L.Conv1D):
            rf += (layer.kernel - 1) * stride_prod
            stride_prod *= layer.stride
        elif not isinstance(layer, (L.Activation, L.Dropout)):
            break  # conv prefix ends at the first non-pointwise layer
    return rf


def count_parameters(spec: ModelSpec) -> int:
    total = 0
    for layer in spec.layers:
        if isinstance(layer, L.Conv1D):
            total += (layer.in_channels * layer.kernel + 1) * layer.out_channels
        elif isinstance(layer, L.Dense):
            total += (layer.in_dim + 1) * layer.out_dim
    return total
