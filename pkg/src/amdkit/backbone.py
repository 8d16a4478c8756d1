"""Embedding backbone: a minimal interpreter for depthwise-separable conv graphs.

A backbone maps one 96x64 log-mel patch to a 1024-dimensional embedding.
The executable graph is loaded from a weight bundle whose header declares
the layer sequence; batch norm is expected to be folded into conv weights
at export time, so the op set is just conv2d, depthwise_conv2d,
global_avg_pool, and dense.

Execution is float32 layer-to-layer with float64 accumulation inside the
contractions.  The low-level conv helpers preserve the dtype they are
given, so tests can drive them in pure float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import WeightBundle
from .errors import FormatError, ShapeError
from .logmel import MEL_BANDS, PATCH_STEPS

EMBEDDING_DIM = 1024

INPUT_SHAPE = (PATCH_STEPS, MEL_BANDS, 1)

_CONV_ACTIVATIONS = ("relu", "none")
_DENSE_ACTIVATIONS = ("none", "tanh", "relu")


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """SAME-padding arithmetic: output size plus (before, after) zero pad."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    before = total // 2
    return out, before, total - before


def conv2d_same(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """2-D convolution, SAME padding.  x: (H, W, Cin); kernel: (kh, kw, Cin, Cout)."""
    kh, kw, cin, _ = kernel.shape
    windows = _window_view(x, kh, kw, stride)
    return np.tensordot(windows, kernel, axes=([2, 3, 4], [0, 1, 2]))


def depthwise_conv2d_same(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Depthwise 2-D convolution (one 2-D kernel per channel), SAME padding.

    x: (H, W, C); kernel: (kh, kw, C).
    """
    kh, kw, _ = kernel.shape
    windows = _window_view(x, kh, kw, stride)
    return np.einsum("hwklc,klc->hwc", windows, kernel)


def _window_view(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    h, w, _ = x.shape
    _, ph0, ph1 = _same_pad(h, kh, stride)
    _, pw0, pw1 = _same_pad(w, kw, stride)
    padded = np.pad(x, ((ph0, ph1), (pw0, pw1), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(0, 1))
    # sliding_window_view yields (H', W', C, kh, kw); put channels last.
    return windows[::stride, ::stride].transpose(0, 1, 3, 4, 2)


@dataclass
class ConvLayer:
    kernel: np.ndarray        # (kh, kw, Cin, Cout), float64 copy for accumulation
    bias: np.ndarray          # (Cout,)
    stride: int
    activation: str
    depthwise: bool

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(shape) != 3:
            raise ShapeError(f"conv layer needs a (H, W, C) input, got {shape}")
        h, w, c = shape
        if self.depthwise:
            kh, kw, kc = self.kernel.shape
            c_out = kc
        else:
            kh, kw, kc, c_out = self.kernel.shape
        if kc != c:
            raise ShapeError(f"conv kernel expects {kc} input channels, got {c}")
        ho, _, _ = _same_pad(h, kh, self.stride)
        wo, _, _ = _same_pad(w, kw, self.stride)
        return (ho, wo, c_out)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = x.astype(np.float64, copy=False)
        if self.depthwise:
            out = depthwise_conv2d_same(x, self.kernel, self.stride)
        else:
            out = conv2d_same(x, self.kernel, self.stride)
        out += self.bias
        if self.activation == "relu":
            np.maximum(out, 0.0, out=out)
        return out.astype(np.float32)


@dataclass
class PoolLayer:
    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(shape) != 3:
            raise ShapeError(f"global_avg_pool needs a (H, W, C) input, got {shape}")
        return (shape[2],)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x.astype(np.float64, copy=False).mean(axis=(0, 1)).astype(np.float32)


@dataclass
class DenseLayer:
    kernel: np.ndarray        # (n_in, units)
    bias: np.ndarray          # (units,)
    activation: str

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        n_in = int(np.prod(shape))
        if n_in != self.kernel.shape[0]:
            raise ShapeError(
                f"dense kernel expects {self.kernel.shape[0]} inputs, got {n_in} (from {shape})"
            )
        return (self.kernel.shape[1],)

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = x.astype(np.float64, copy=False).reshape(-1) @ self.kernel + self.bias
        if self.activation == "relu":
            np.maximum(out, 0.0, out=out)
        elif self.activation == "tanh":
            np.tanh(out, out=out)
        return out.astype(np.float32)


@dataclass
class BackboneGraph:
    """Shape-checked, immutable layer sequence; safe to share across sessions."""

    layers: list
    input_shape: tuple[int, ...] = INPUT_SHAPE


def load_backbone(bundle: WeightBundle) -> BackboneGraph:
    """Build an executable graph from a bundle's backbone section.

    Raises FormatError if the section or a referenced tensor is missing,
    ShapeError if consecutive layers are incompatible or the propagated
    output is not a 1024-vector.
    """
    spec = bundle.backbone_spec
    if spec is None:
        raise FormatError("bundle has no backbone section")
    layer_specs = spec.get("layers")
    if not isinstance(layer_specs, list) or not layer_specs:
        raise FormatError("backbone section has no layers")
    input_shape = tuple(spec.get("input_shape", INPUT_SHAPE))
    if input_shape != INPUT_SHAPE:
        raise ShapeError(f"backbone input shape {input_shape} != {INPUT_SHAPE}")

    layers = []
    for i, entry in enumerate(layer_specs):
        op = entry.get("op")
        if op in ("conv2d", "depthwise_conv2d"):
            stride = int(entry.get("stride", 1))
            if stride not in (1, 2):
                raise ShapeError(f"layer {i}: stride must be 1 or 2, got {stride}")
            activation = entry.get("activation", "relu")
            if activation not in _CONV_ACTIVATIONS:
                raise ShapeError(f"layer {i}: bad conv activation {activation!r}")
            kernel = _tensor(bundle, entry, "kernel", i)
            bias = _tensor(bundle, entry, "bias", i)
            rank = 3 if op == "depthwise_conv2d" else 4
            if kernel.ndim != rank:
                raise ShapeError(f"layer {i}: {op} kernel must have rank {rank}, got {kernel.shape}")
            c_out = kernel.shape[-1]
            if bias.shape != (c_out,):
                raise ShapeError(f"layer {i}: bias shape {bias.shape} != ({c_out},)")
            layers.append(ConvLayer(
                kernel=kernel.astype(np.float64),
                bias=bias.astype(np.float64),
                stride=stride,
                activation=activation,
                depthwise=(op == "depthwise_conv2d"),
            ))
        elif op == "global_avg_pool":
            layers.append(PoolLayer())
        elif op == "dense":
            activation = entry.get("activation", "none")
            if activation not in _DENSE_ACTIVATIONS:
                raise ShapeError(f"layer {i}: bad dense activation {activation!r}")
            kernel = _tensor(bundle, entry, "kernel", i)
            bias = _tensor(bundle, entry, "bias", i)
            if kernel.ndim != 2:
                raise ShapeError(f"layer {i}: dense kernel must have rank 2, got {kernel.shape}")
            if bias.shape != (kernel.shape[1],):
                raise ShapeError(f"layer {i}: bias shape {bias.shape} != ({kernel.shape[1]},)")
            layers.append(DenseLayer(
                kernel=kernel.astype(np.float64),
                bias=bias.astype(np.float64),
                activation=activation,
            ))
        else:
            raise FormatError(f"layer {i}: unknown op {op!r}")

    shape = input_shape
    for i, layer in enumerate(layers):
        try:
            shape = layer.output_shape(shape)
        except ShapeError as exc:
            raise ShapeError(f"layer {i}: {exc}") from exc
    if shape != (EMBEDDING_DIM,):
        raise ShapeError(f"backbone output shape {shape} != ({EMBEDDING_DIM},)")
    return BackboneGraph(layers=layers, input_shape=input_shape)


def _tensor(bundle: WeightBundle, entry: dict, key: str, index: int) -> np.ndarray:
    name = entry.get(key)
    if not isinstance(name, str):
        raise FormatError(f"layer {index}: missing {key!r} tensor name")
    try:
        return bundle.tensors[name]
    except KeyError:
        raise FormatError(f"layer {index}: tensor {name!r} not in bundle") from None


def embed(graph: BackboneGraph, patch: np.ndarray) -> np.ndarray:
    """Deterministic forward pass: one 96x64 patch in, one float32 1024-vector out."""
    x = np.asarray(patch, dtype=np.float32).reshape(graph.input_shape)
    for layer in graph.layers:
        x = layer.apply(x)
    return x
