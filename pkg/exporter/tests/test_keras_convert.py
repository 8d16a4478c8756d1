"""Conversion checks against real Keras models.

The exported tensors are judged by behaviour: the engine (and the float64
reference math) must reproduce ``model.predict`` on the same embedding
sequences.  Skipped wholesale when tensorflow is not installed.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")
tf = pytest.importorskip("tensorflow")

# keras's numpy bridge still lacks the copy keyword under numpy 2
pytestmark = pytest.mark.filterwarnings(
    "ignore:__array__ implementation doesn't accept a copy keyword:DeprecationWarning")
from tensorflow import keras  # noqa: E402

from amdkit_exporter import reference  # noqa: E402
from amdkit_exporter.bundlefmt import serialize  # noqa: E402
from amdkit_exporter.errors import MissingLayer, ShapeMismatch  # noqa: E402
from amdkit_exporter.keras_convert import (  # noqa: E402
    CLASSIFIER_SHAPES,
    EXPECTED_PARAMETER_COUNT,
    export_classifier,
    export_classifier_from_model,
    fold_batch_norm,
)

TOLERANCE = 1e-5


def build_model(gru_units: int = 48, batch_norm: bool = False, **gru_kwargs):
    inputs = keras.Input(shape=(None, 1024))
    if batch_norm:
        x = keras.layers.Dense(32)(inputs)
        x = keras.layers.BatchNormalization()(x)
        x = keras.layers.Activation("tanh")(x)
    else:
        x = keras.layers.Dense(32, activation="tanh")(inputs)
    x = keras.layers.GRU(gru_units, return_sequences=True, **gru_kwargs)(x)
    outputs = keras.layers.Dense(1, activation="sigmoid")(x)
    return keras.Model(inputs, outputs)


def randomize_weights(model, seed: int, scale: float = 0.3) -> None:
    """Deterministic non-trivial weights; batch-norm statistics kept sane."""
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        weights = layer.get_weights()
        if not weights:
            continue
        if type(layer).__name__ == "BatchNormalization":
            gamma, beta, mean, variance = weights
            layer.set_weights([
                rng.uniform(0.5, 1.5, gamma.shape).astype(np.float32),
                rng.uniform(-0.3, 0.3, beta.shape).astype(np.float32),
                rng.uniform(-0.3, 0.3, mean.shape).astype(np.float32),
                rng.uniform(0.5, 2.0, variance.shape).astype(np.float32),
            ])
        else:
            layer.set_weights([
                rng.uniform(-scale, scale, w.shape).astype(np.float32)
                for w in weights
            ])


def keras_probabilities(model, embeddings: np.ndarray) -> np.ndarray:
    return model.predict(embeddings[None, :, :], verbose=0)[0, :, 0].astype(np.float64)


def engine_probabilities(tensors: dict[str, np.ndarray],
                         embeddings: np.ndarray) -> np.ndarray:
    classifier = pytest.importorskip("amdkit.classifier")
    bundle_mod = pytest.importorskip("amdkit.bundle")
    weights = classifier.load_classifier(bundle_mod.parse_bundle(serialize(tensors)))
    state = classifier.fresh_state()
    probabilities = []
    for embedding in embeddings:
        probability, state = classifier.step(weights, state, embedding)
        probabilities.append(probability)
    return np.array(probabilities)


@pytest.fixture(scope="module")
def model():
    model = build_model()
    randomize_weights(model, seed=11)
    return model


@pytest.fixture(scope="module")
def tensors(model):
    return export_classifier_from_model(model)


@pytest.fixture(scope="module")
def embeddings():
    return np.random.default_rng(12).uniform(-1.0, 1.0, (8, 1024)).astype(np.float32)


class TestExportedTensors:

    def test_canonical_names_and_shapes(self, tensors):
        assert list(tensors) == list(CLASSIFIER_SHAPES)
        for name, shape in CLASSIFIER_SHAPES.items():
            assert tensors[name].shape == shape
            assert tensors[name].dtype == np.float32

    def test_parameter_count_matches_model(self, model, tensors):
        exported = sum(t.size for t in tensors.values())
        assert exported == EXPECTED_PARAMETER_COUNT
        assert model.count_params() == exported

    def test_gru_bias_rows_split(self, model, tensors):
        gru = next(layer for layer in model.layers if type(layer).__name__ == "GRU")
        bias = gru.get_weights()[2]
        assert np.array_equal(tensors["gru.input_bias"], bias[0])
        assert np.array_equal(tensors["gru.recurrent_bias"], bias[1])


class TestBehaviouralEquivalence:

    def test_reference_matches_keras(self, model, tensors, embeddings):
        expected = keras_probabilities(model, embeddings)
        actual = reference.head_probabilities(tensors, embeddings)
        assert np.abs(actual - expected).max() < TOLERANCE

    def test_engine_matches_keras(self, model, tensors, embeddings):
        expected = keras_probabilities(model, embeddings)
        actual = engine_probabilities(tensors, embeddings)
        assert np.abs(actual - expected).max() < TOLERANCE

    def test_batch_norm_folding_preserves_behaviour(self, embeddings):
        model = build_model(batch_norm=True)
        randomize_weights(model, seed=13)
        tensors = export_classifier_from_model(model)
        assert list(tensors) == list(CLASSIFIER_SHAPES)
        expected = keras_probabilities(model, embeddings)
        assert np.abs(reference.head_probabilities(tensors, embeddings)
                      - expected).max() < TOLERANCE


class TestFoldBatchNorm:

    def test_single_unit_closed_form(self):
        kernel, bias = fold_batch_norm(
            kernel=np.array([[2.0]]), bias=np.array([1.0]),
            gamma=np.array([3.0]), beta=np.array([0.25]),
            mean=np.array([0.5]), variance=np.array([4.0]), epsilon=0.0)
        # scale = 3 / sqrt(4) = 1.5
        assert np.allclose(kernel, [[3.0]], rtol=0, atol=1e-15)
        assert np.allclose(bias, [1.5 * 0.5 + 0.25], rtol=0, atol=1e-15)

    def test_identity_norm_is_noop(self):
        rng = np.random.default_rng(14)
        kernel = rng.uniform(-1.0, 1.0, (4, 3))
        bias = rng.uniform(-1.0, 1.0, 3)
        folded_kernel, folded_bias = fold_batch_norm(
            kernel, bias, gamma=np.ones(3), beta=np.zeros(3),
            mean=np.zeros(3), variance=np.ones(3), epsilon=0.0)
        assert np.allclose(folded_kernel, kernel, rtol=0, atol=1e-15)
        assert np.allclose(folded_bias, bias, rtol=0, atol=1e-15)


class TestCheckpointFile:

    def test_saved_model_round_trip(self, model, tensors, tmp_path):
        path = tmp_path / "classifier.keras"
        model.save(path)
        reloaded = export_classifier(str(path))
        assert all(np.array_equal(reloaded[name], tensors[name]) for name in tensors)


class TestRejection:

    def test_wrong_recurrent_width(self):
        model = build_model(gru_units=64)
        with pytest.raises(ShapeMismatch, match="gru.kernel"):
            export_classifier_from_model(model)

    def test_missing_recurrent_layer(self):
        inputs = keras.Input(shape=(None, 1024))
        x = keras.layers.Dense(32, activation="tanh")(inputs)
        outputs = keras.layers.Dense(1, activation="sigmoid")(x)
        with pytest.raises(MissingLayer, match="recurrent"):
            export_classifier_from_model(keras.Model(inputs, outputs))

    def test_extra_dense_layer(self):
        inputs = keras.Input(shape=(None, 1024))
        x = keras.layers.Dense(64, activation="relu")(inputs)
        x = keras.layers.Dense(32, activation="tanh")(x)
        x = keras.layers.GRU(48, return_sequences=True)(x)
        outputs = keras.layers.Dense(1, activation="sigmoid")(x)
        with pytest.raises(MissingLayer, match="dense"):
            export_classifier_from_model(keras.Model(inputs, outputs))

    def test_normalization_before_any_layer(self):
        inputs = keras.Input(shape=(None, 1024))
        x = keras.layers.BatchNormalization()(inputs)
        x = keras.layers.Dense(32, activation="tanh")(x)
        x = keras.layers.GRU(48, return_sequences=True)(x)
        outputs = keras.layers.Dense(1, activation="sigmoid")(x)
        with pytest.raises(MissingLayer, match="precedes"):
            export_classifier_from_model(keras.Model(inputs, outputs))

    def test_single_bias_recurrent_layout(self):
        model = build_model(reset_after=False)
        with pytest.raises(ShapeMismatch, match="reset-after"):
            export_classifier_from_model(model)

    def test_unbiased_recurrent_layer(self):
        model = build_model(use_bias=False)
        with pytest.raises(ShapeMismatch, match="weight arrays"):
            export_classifier_from_model(model)
