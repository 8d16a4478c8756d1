"""Keras checkpoint -> weight bundle conversion for the classifier head.

Pins the conventions the engine assumes: gate order update|reset|candidate,
reset-after recurrence with two separate bias vectors, row-major kernels.
Batch normalization layers, if present after a dense or conv layer, are
folded into that layer's kernel and bias so the exported graph needs no
normalization op.
"""

from __future__ import annotations

import numpy as np

from .errors import MissingLayer, ShapeMismatch

EMBEDDING_DIM = 1024
DENSE1_UNITS = 32
GRU_UNITS = 48
EXPECTED_PARAMETER_COUNT = 44_657

CLASSIFIER_SHAPES = {
    "dense1.kernel": (EMBEDDING_DIM, DENSE1_UNITS),
    "dense1.bias": (DENSE1_UNITS,),
    "gru.kernel": (DENSE1_UNITS, 3 * GRU_UNITS),
    "gru.recurrent_kernel": (GRU_UNITS, 3 * GRU_UNITS),
    "gru.input_bias": (3 * GRU_UNITS,),
    "gru.recurrent_bias": (3 * GRU_UNITS,),
    "dense2.kernel": (GRU_UNITS, 1),
    "dense2.bias": (1,),
}


def fold_batch_norm(kernel: np.ndarray, bias: np.ndarray, gamma: np.ndarray,
                    beta: np.ndarray, mean: np.ndarray, variance: np.ndarray,
                    epsilon: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Fold ``y = gamma * (Wx + b - mean)/sqrt(var + eps) + beta`` into (W', b').

    The scale applies along the kernel's last axis (output channels/units),
    which covers dense, conv, and depthwise-conv kernels alike.
    """
    scale = np.asarray(gamma, dtype=np.float64) / np.sqrt(
        np.asarray(variance, dtype=np.float64) + epsilon)
    folded_kernel = np.asarray(kernel, dtype=np.float64) * scale
    folded_bias = (np.asarray(bias, dtype=np.float64)
                   - np.asarray(mean, dtype=np.float64)) * scale \
        + np.asarray(beta, dtype=np.float64)
    return folded_kernel, folded_bias


def _layer_kind(layer) -> str:
    return type(layer).__name__


def export_classifier_from_model(model) -> dict[str, np.ndarray]:
    """Extract the eight classifier tensors from a built Keras model.

    The model must contain, in order, Dense(32), GRU(48, reset_after), and
    Dense(1); a BatchNormalization directly after either dense layer is
    folded away.  Raises MissingLayer / ShapeMismatch otherwise.
    """
    dense_layers = []
    gru_layers = []
    follows: dict[int, object] = {}
    interesting = [layer for layer in model.layers
                   if _layer_kind(layer) in ("Dense", "GRU", "BatchNormalization")]
    for position, layer in enumerate(interesting):
        kind = _layer_kind(layer)
        if kind == "Dense":
            dense_layers.append(layer)
        elif kind == "GRU":
            gru_layers.append(layer)
        else:
            if position == 0:
                raise MissingLayer("batch normalization precedes any foldable layer")
            follows[id(interesting[position - 1])] = layer

    if len(dense_layers) != 2:
        raise MissingLayer(f"expected exactly 2 dense layers, found {len(dense_layers)}")
    if len(gru_layers) != 1:
        raise MissingLayer(f"expected exactly 1 recurrent layer, found {len(gru_layers)}")
    dense1, dense2 = dense_layers
    gru = gru_layers[0]

    def dense_tensors(layer) -> tuple[np.ndarray, np.ndarray]:
        kernel, bias = layer.get_weights()
        bn = follows.get(id(layer))
        if bn is not None:
            gamma, beta, mean, variance = bn.get_weights()
            kernel, bias = fold_batch_norm(kernel, bias, gamma, beta, mean, variance,
                                           epsilon=float(bn.epsilon))
        return kernel, bias

    d1_kernel, d1_bias = dense_tensors(dense1)
    d2_kernel, d2_bias = dense_tensors(dense2)

    gru_weights = gru.get_weights()
    if len(gru_weights) != 3:
        raise ShapeMismatch(
            f"recurrent layer carries {len(gru_weights)} weight arrays, expected 3")
    g_kernel, g_recurrent, g_bias = gru_weights
    if g_bias.ndim != 2 or g_bias.shape[0] != 2:
        raise ShapeMismatch(
            f"recurrent bias shape {g_bias.shape}: need the two-row reset-after layout")

    tensors = {
        "dense1.kernel": d1_kernel,
        "dense1.bias": d1_bias,
        "gru.kernel": g_kernel,
        "gru.recurrent_kernel": g_recurrent,
        "gru.input_bias": g_bias[0],
        "gru.recurrent_bias": g_bias[1],
        "dense2.kernel": d2_kernel,
        "dense2.bias": d2_bias,
    }
    for name, shape in CLASSIFIER_SHAPES.items():
        if tuple(tensors[name].shape) != shape:
            raise ShapeMismatch(
                f"{name}: checkpoint shape {tuple(tensors[name].shape)}, engine needs {shape}")
    count = sum(t.size for t in tensors.values())
    if count != EXPECTED_PARAMETER_COUNT:
        raise ShapeMismatch(
            f"parameter count {count} != {EXPECTED_PARAMETER_COUNT}")
    return {name: np.asarray(tensors[name], dtype=np.float32)
            for name in CLASSIFIER_SHAPES}


def export_classifier(checkpoint_path: str) -> dict[str, np.ndarray]:
    """Load a Keras checkpoint (.keras / .h5) and extract the classifier tensors."""
    from tensorflow import keras

    model = keras.models.load_model(checkpoint_path, compile=False)
    return export_classifier_from_model(model)
