"""Recurrent classifier head: Dense(1024->32, tanh) -> GRU(48) -> Dense(48->1, sigmoid).

The GRU is the reset-after variant with gate order (update, reset,
candidate) and separate input/recurrent bias vectors.  The sigmoid output
is the probability that the caller is a machine: 0 maps to HUMAN, 1 to
MACHINE.

The head can run statefully (one ``step`` per frame, hidden state carried
in a ``ClassifierState``) or statelessly (``run_sequence`` over a cached
embedding list); both produce identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backbone import EMBEDDING_DIM
from .bundle import WeightBundle
from .errors import EmptySequence, FormatError, NonFiniteInput, ShapeError

DENSE1_UNITS = 32
GRU_UNITS = 48
OUTPUT_UNITS = 1

# Dense(1024->32) + reset-after GRU(32->48, two bias vectors) + Dense(48->1).
EXPECTED_PARAMETER_COUNT = 44_657

CLASSIFIER_TENSOR_SHAPES = {
    "dense1.kernel": (EMBEDDING_DIM, DENSE1_UNITS),
    "dense1.bias": (DENSE1_UNITS,),
    "gru.kernel": (DENSE1_UNITS, 3 * GRU_UNITS),
    "gru.recurrent_kernel": (GRU_UNITS, 3 * GRU_UNITS),
    "gru.input_bias": (3 * GRU_UNITS,),
    "gru.recurrent_bias": (3 * GRU_UNITS,),
    "dense2.kernel": (GRU_UNITS, OUTPUT_UNITS),
    "dense2.bias": (OUTPUT_UNITS,),
}


def parameter_count(dims: tuple[int, int, int, int]) -> int:
    """Trainable parameter count for head dims (input, dense1, gru, output).

    The reset-after GRU carries two bias vectors, hence the 2g term per gate
    triple.
    """
    n_in, d1, g, out = dims
    if min(dims) < 1:
        raise ValueError(f"all dims must be >= 1, got {dims}")
    return (n_in * d1 + d1) + 3 * (d1 * g + g * g + 2 * g) + (g * out + out)


@dataclass
class ClassifierWeights:
    """Validated parameter set; immutable and shareable across sessions."""

    dense1_kernel: np.ndarray
    dense1_bias: np.ndarray
    gru_kernel: np.ndarray            # (32, 144), gate order z|r|h
    gru_recurrent_kernel: np.ndarray  # (48, 144)
    gru_input_bias: np.ndarray        # (144,)
    gru_recurrent_bias: np.ndarray    # (144,)
    dense2_kernel: np.ndarray
    dense2_bias: np.ndarray


@dataclass
class ClassifierState:
    """Per-session recurrent state: 48 hidden values plus a step counter."""

    hidden: np.ndarray = field(default_factory=lambda: np.zeros(GRU_UNITS, dtype=np.float32))
    frames_seen: int = 0


def fresh_state() -> ClassifierState:
    return ClassifierState()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def step(weights: ClassifierWeights, state: ClassifierState,
         embedding: np.ndarray) -> tuple[float, ClassifierState]:
    """Advance the classifier by one frame; returns (probability, new state).

    Layer math runs with float64 accumulation and float32 results.  Raises
    NonFiniteInput if the embedding contains NaN or infinity.
    """
    e = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if e.shape != (EMBEDDING_DIM,):
        raise ShapeError(f"embedding must have {EMBEDDING_DIM} values, got {e.shape}")
    if not np.all(np.isfinite(e)):
        raise NonFiniteInput("embedding contains non-finite values")

    w = weights
    x = np.tanh(e @ w.dense1_kernel + w.dense1_bias).astype(np.float32)

    h = state.hidden.astype(np.float64)
    gx = x.astype(np.float64) @ w.gru_kernel + w.gru_input_bias
    gh = h @ w.gru_recurrent_kernel + w.gru_recurrent_bias
    xz, xr, xh = np.split(gx, 3)
    hz, hr, hh = np.split(gh, 3)

    z = _sigmoid(xz + hz)
    r = _sigmoid(xr + hr)
    h_cand = np.tanh(xh + r * hh)
    h_new = (z * h + (1.0 - z) * h_cand).astype(np.float32)

    logit = h_new.astype(np.float64) @ w.dense2_kernel + w.dense2_bias
    probability = float(_sigmoid(logit)[0])
    return probability, ClassifierState(hidden=h_new, frames_seen=state.frames_seen + 1)


def run_sequence(weights: ClassifierWeights, embeddings) -> float:
    """Stateless inference: fold ``step`` over the embeddings from a fresh state.

    Returns the final probability; raises EmptySequence for an empty list.
    """
    state = fresh_state()
    probability = None
    for e in embeddings:
        probability, state = step(weights, state, e)
    if probability is None:
        raise EmptySequence("run_sequence needs at least one embedding")
    return probability


def load_classifier(bundle: WeightBundle) -> ClassifierWeights:
    """Extract and validate the classifier tensors from a bundle.

    All eight tensors must be present with their exact shapes; the total
    parameter count is re-checked against the architecture.
    """
    tensors = {}
    for name, shape in CLASSIFIER_TENSOR_SHAPES.items():
        if name not in bundle.tensors:
            raise FormatError(f"bundle has no classifier tensor {name!r}")
        tensor = bundle.tensors[name]
        if tensor.shape != shape:
            raise ShapeError(f"classifier tensor {name!r} has shape {tensor.shape}, want {shape}")
        if not np.all(np.isfinite(tensor)):
            raise ShapeError(f"classifier tensor {name!r} contains non-finite values")
        tensors[name] = tensor.astype(np.float64)

    total = sum(int(np.prod(shape)) for shape in CLASSIFIER_TENSOR_SHAPES.values())
    expected = parameter_count((EMBEDDING_DIM, DENSE1_UNITS, GRU_UNITS, OUTPUT_UNITS))
    if total != expected or expected != EXPECTED_PARAMETER_COUNT:
        raise ShapeError(f"classifier parameter count {total} != {EXPECTED_PARAMETER_COUNT}")

    return ClassifierWeights(
        dense1_kernel=tensors["dense1.kernel"],
        dense1_bias=tensors["dense1.bias"],
        gru_kernel=tensors["gru.kernel"],
        gru_recurrent_kernel=tensors["gru.recurrent_kernel"],
        gru_input_bias=tensors["gru.input_bias"],
        gru_recurrent_bias=tensors["gru.recurrent_bias"],
        dense2_kernel=tensors["dense2.kernel"],
        dense2_bias=tensors["dense2.bias"],
    )


class StatefulScorer:
    """Per-session scorer that advances one GRU state per embedding."""

    def __init__(self, weights: ClassifierWeights) -> None:
        self._weights = weights
        self.state = fresh_state()

    def score(self, embedding: np.ndarray) -> float:
        # Embeddings enter serving as float32 in both modes, so stateful and
        # cached trajectories stay bitwise identical for any input dtype.
        embedding = np.asarray(embedding, dtype=np.float32)
        probability, self.state = step(self._weights, self.state, embedding)
        return probability


class CachedScorer:
    """Stateless scorer: caches embeddings and re-infers over the whole prefix.

    Trades redundant compute for a model with no per-session state, so the
    weights can be served shared.  Trajectories match StatefulScorer exactly.
    """

    def __init__(self, weights: ClassifierWeights) -> None:
        self._weights = weights
        self.embeddings: list[np.ndarray] = []

    def score(self, embedding: np.ndarray) -> float:
        self.embeddings.append(np.asarray(embedding, dtype=np.float32))
        return run_sequence(self._weights, self.embeddings)
