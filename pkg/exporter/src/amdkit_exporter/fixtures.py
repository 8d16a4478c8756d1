"""Deterministic oracle-fixture generation for the engine's test suite.

``make_fixtures(seed, out_dir)`` writes, entirely from this package's
float64 reference math:

* ``classifier/`` — random classifier weights plus 100 embedding sequences
  with per-step expected probabilities;
* ``backbone/`` — a tiny three-weight-layer conv backbone with patches and
  expected embeddings;
* ``conv/`` — small convolution cases with loop-computed expected outputs;
* ``testnet/`` — a full serving bundle (classifier + single-dense backbone)
  small enough for fast end-to-end tests;
* ``e2e/`` — a constructed 4 s signal and the exact session outcomes three
  parameter settings must produce;
* ``manifest.json`` — seed, tolerances, and a sha256 inventory.

Everything is a pure function of the seed, so regenerating a pack must be
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import wave

import numpy as np

from . import reference
from .bundlefmt import serialize

DEFAULT_SEED = 20_240_817

EMBEDDING_DIM = 1024
DENSE1_UNITS = 32
GRU_UNITS = 48

SEQUENCE_COUNT = 100
MAX_SEQUENCE_LEN = 16

TOLERANCES = {
    "classifier_probability": 1e-5,
    "backbone_embedding": 1e-5,
    "conv_float64": 1e-12,
    "e2e_probability": 1e-4,
}

SILENCE_THRESHOLD_DBFS = -50.0
LABEL_MARGIN = 1e-3


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
            fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(np.float32)


def _bias(rng: np.random.Generator, size: int, scale: float = 0.1) -> np.ndarray:
    return rng.uniform(-scale, scale, size).astype(np.float32)


def classifier_tensors(rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Random classifier head weights, float32, in canonical bundle order."""
    g3 = 3 * GRU_UNITS
    return {
        "dense1.kernel": _glorot(rng, (EMBEDDING_DIM, DENSE1_UNITS), EMBEDDING_DIM, DENSE1_UNITS),
        "dense1.bias": _bias(rng, DENSE1_UNITS),
        "gru.kernel": _glorot(rng, (DENSE1_UNITS, g3), DENSE1_UNITS, g3),
        "gru.recurrent_kernel": _glorot(rng, (GRU_UNITS, g3), GRU_UNITS, g3),
        "gru.input_bias": _bias(rng, g3),
        "gru.recurrent_bias": _bias(rng, g3),
        "dense2.kernel": _glorot(rng, (GRU_UNITS, 1), GRU_UNITS, 1),
        "dense2.bias": _bias(rng, 1),
    }


def tiny_backbone(rng: np.random.Generator) -> tuple[dict[str, np.ndarray], dict]:
    """Conv(1->6, /2) -> depthwise(/2) -> pool -> dense(6->1024): three weight layers."""
    tensors = {
        "conv1.kernel": _glorot(rng, (3, 3, 1, 6), 9, 6),
        "conv1.bias": _bias(rng, 6),
        "dw1.kernel": _glorot(rng, (3, 3, 6), 9, 9),
        "dw1.bias": _bias(rng, 6),
        "proj.kernel": _glorot(rng, (6, EMBEDDING_DIM), 6, EMBEDDING_DIM),
        "proj.bias": _bias(rng, EMBEDDING_DIM),
    }
    spec = {
        "input_shape": [96, 64, 1],
        "layers": [
            {"op": "conv2d", "kernel": "conv1.kernel", "bias": "conv1.bias",
             "stride": 2, "activation": "relu"},
            {"op": "depthwise_conv2d", "kernel": "dw1.kernel", "bias": "dw1.bias",
             "stride": 2, "activation": "relu"},
            {"op": "global_avg_pool"},
            {"op": "dense", "kernel": "proj.kernel", "bias": "proj.bias",
             "activation": "tanh"},
        ],
    }
    return tensors, spec


def dense_backbone(rng: np.random.Generator) -> tuple[dict[str, np.ndarray], dict]:
    """Single dense projection of the flattened patch; the fast test backend."""
    flat = 96 * 64
    tensors = {
        "backbone.dense.kernel": _glorot(rng, (flat, EMBEDDING_DIM), flat, EMBEDDING_DIM),
        "backbone.dense.bias": _bias(rng, EMBEDDING_DIM, scale=0.05),
    }
    spec = {
        "input_shape": [96, 64, 1],
        "layers": [
            {"op": "dense", "kernel": "backbone.dense.kernel",
             "bias": "backbone.dense.bias", "activation": "tanh"},
        ],
    }
    return tensors, spec


def conv_cases(rng: np.random.Generator) -> list[dict]:
    """Small convolution problems with loop-computed float64 expectations."""
    shapes = [
        ("conv_s1", "conv2d", (9, 7, 3), (3, 3, 3, 5), 1),
        ("conv_s2", "conv2d", (9, 7, 3), (3, 3, 3, 5), 2),
        ("conv_1x1", "conv2d", (8, 8, 1), (1, 1, 1, 4), 1),
        ("conv_even", "conv2d", (6, 6, 2), (3, 3, 2, 3), 2),
        ("conv_full", "conv2d", (5, 5, 2), (5, 5, 2, 2), 2),
        ("dw_s1", "depthwise_conv2d", (10, 6, 4), (3, 3, 4), 1),
        ("dw_s2", "depthwise_conv2d", (10, 6, 4), (3, 3, 4), 2),
    ]
    cases = []
    for name, op, x_shape, k_shape, stride in shapes:
        x = rng.uniform(-1.0, 1.0, x_shape).astype(np.float32)
        kernel = rng.uniform(-1.0, 1.0, k_shape).astype(np.float32)
        if op == "conv2d":
            expected = reference.conv2d_reference(x, kernel, stride)
        else:
            expected = reference.depthwise_conv2d_reference(x, kernel, stride)
        cases.append({"name": name, "op": op, "stride": stride,
                      "x": x, "kernel": kernel, "expected": expected})
    return cases


def e2e_signal(rng: np.random.Generator) -> np.ndarray:
    """4.000 s int16 stream: loud noise with one quiet 960 ms span.

    The quiet span covers exactly the fifth analysis window (1920-2880 ms),
    so with the default gate exactly one frame is silence-skipped; the
    overlapping neighbours stay loud.
    """
    def noise(ms: int, amplitude: float) -> np.ndarray:
        n = ms * reference.SAMPLE_RATE // 1000
        return np.round(rng.uniform(-amplitude, amplitude, n) * 32767.0)

    parts = [noise(1920, 0.3), noise(960, 1e-4), noise(1120, 0.3)]
    signal = np.concatenate(parts).astype(np.int16)
    assert signal.shape[0] == 4 * reference.SAMPLE_RATE
    return signal


def _e2e_outcomes(signal: np.ndarray, classifier: dict[str, np.ndarray],
                  backbone_spec: dict, backbone_tensors: dict[str, np.ndarray]) -> dict:
    """Frame probabilities and session outcomes for the three parameter cases."""
    samples = signal.astype(np.float64) / 32768.0
    frames = reference.frame_stream(samples)
    end_ms_list = [index * 480 + 960 for index, _, _ in frames]

    probabilities: list[float | None] = []
    embeddings: list[np.ndarray] = []
    silent_indices = []
    for index, window, _tail in frames:
        if reference.dbfs(window) < SILENCE_THRESHOLD_DBFS:
            probabilities.append(None)
            silent_indices.append(index)
            continue
        patch = reference.logmel_patch_reference(window)
        embeddings.append(reference.backbone_forward(
            backbone_spec["layers"], backbone_tensors, patch))
        probabilities.append(
            float(reference.head_probabilities(classifier, np.stack(embeddings))[-1]))

    assert silent_indices == [4], f"expected only frame 4 silent, got {silent_indices}"
    scored = [p for p in probabilities if p is not None]
    assert all(abs(p - 0.5) > LABEL_MARGIN for p in scored), "label margin too small"
    assert all(max(p, 1.0 - p) < 0.9 - LABEL_MARGIN for p in scored), \
        "confidence crosses the default threshold; pick another seed"

    param_cases = [
        ("stream_ended", {"timeout_ms": 10_000, "confidence_threshold": 0.9,
                          "min_detection_time_ms": 1_920}),
        ("threshold_met", {"timeout_ms": 10_000, "confidence_threshold": 0.5,
                           "min_detection_time_ms": 1_920}),
        ("timeout", {"timeout_ms": 2_000, "confidence_threshold": 1.0,
                     "min_detection_time_ms": 0}),
    ]
    cases = []
    for name, params in param_cases:
        outcome = reference.simulate_session(
            probabilities, end_ms_list, signal.shape[0], **params)
        cases.append({"name": name, "params": dict(params),
                      "silence_threshold_dbfs": SILENCE_THRESHOLD_DBFS, **outcome})
    expected_reasons = {"stream_ended": "STREAM_ENDED", "threshold_met": "THRESHOLD_MET",
                        "timeout": "TIMEOUT"}
    for case in cases:
        assert case["verdict"]["reason"] == expected_reasons[case["name"]], case
    return {"cases": cases}


def _write_npy(path: str, array: np.ndarray) -> None:
    np.save(path, array, allow_pickle=False)


def _write_wav(path: str, pcm: np.ndarray, rate: int = 16_000) -> None:
    with wave.open(path, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.astype("<i2").tobytes())


def make_fixtures(seed: int = DEFAULT_SEED, out_dir: str = "fixtures") -> dict:
    """Generate the complete fixture pack; returns the manifest dict."""
    rng = np.random.default_rng(seed)
    for sub in ("classifier", "backbone", "conv", "testnet", "e2e"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    # --- classifier oracle -------------------------------------------------
    head = classifier_tensors(rng)
    lengths = rng.integers(1, MAX_SEQUENCE_LEN + 1, SEQUENCE_COUNT)
    total = int(lengths.sum())
    inputs = rng.uniform(-1.0, 1.0, (total, EMBEDDING_DIM)).astype(np.float32)
    expected = np.concatenate([
        reference.head_probabilities(head, inputs[start:start + int(n)])
        for start, n in zip(np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    ])
    with open(os.path.join(out_dir, "classifier", "weights.amdw"), "wb") as fh:
        fh.write(serialize(head))
    _write_npy(os.path.join(out_dir, "classifier", "inputs.npy"), inputs)
    _write_npy(os.path.join(out_dir, "classifier", "lengths.npy"),
               lengths.astype(np.int64))
    _write_npy(os.path.join(out_dir, "classifier", "expected.npy"), expected)

    # --- tiny conv backbone oracle ----------------------------------------
    tiny_tensors, tiny_spec = tiny_backbone(rng)
    patches = np.stack([
        rng.uniform(-6.9, 2.0, (96, 64)).astype(np.float32),
        rng.uniform(-6.9, 2.0, (96, 64)).astype(np.float32),
        reference.logmel_patch_reference(
            rng.uniform(-0.5, 0.5, reference.FRAME_SAMPLES)).astype(np.float32),
        reference.logmel_patch_reference(
            np.round(rng.uniform(-0.3, 0.3, reference.FRAME_SAMPLES) * 32767.0)
            / 32768.0).astype(np.float32),
    ])
    tiny_expected = np.stack([
        reference.backbone_forward(tiny_spec["layers"], tiny_tensors, patch)
        for patch in patches
    ])
    with open(os.path.join(out_dir, "backbone", "tiny.amdw"), "wb") as fh:
        fh.write(serialize(tiny_tensors, tiny_spec))
    _write_npy(os.path.join(out_dir, "backbone", "patches.npy"), patches)
    _write_npy(os.path.join(out_dir, "backbone", "expected.npy"), tiny_expected)

    # --- convolution loop oracle ------------------------------------------
    case_index = []
    for case in conv_cases(rng):
        stem = os.path.join(out_dir, "conv", case["name"])
        _write_npy(stem + "_x.npy", case["x"])
        _write_npy(stem + "_kernel.npy", case["kernel"])
        _write_npy(stem + "_expected.npy", case["expected"])
        case_index.append({"name": case["name"], "op": case["op"],
                           "stride": case["stride"]})
    with open(os.path.join(out_dir, "conv", "cases.json"), "w") as fh:
        json.dump({"cases": case_index}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    # --- full serving bundle (classifier + dense test backend) ------------
    dense_tensors, dense_spec = dense_backbone(rng)
    with open(os.path.join(out_dir, "testnet", "engine.amdw"), "wb") as fh:
        fh.write(serialize({**head, **dense_tensors}, dense_spec))

    # --- end-to-end session outcomes --------------------------------------
    signal = e2e_signal(rng)
    _write_wav(os.path.join(out_dir, "e2e", "signal.wav"), signal)
    outcomes = _e2e_outcomes(signal, head, dense_spec, dense_tensors)
    with open(os.path.join(out_dir, "e2e", "cases.json"), "w") as fh:
        json.dump(outcomes, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = {
        "seed": seed,
        "sequence_count": SEQUENCE_COUNT,
        "tolerances": TOLERANCES,
        "files": _inventory(out_dir),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _inventory(out_dir: str) -> dict[str, str]:
    files = {}
    for root, _dirs, names in os.walk(out_dir):
        for name in sorted(names):
            if name == "manifest.json":
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir).replace(os.sep, "/")
            with open(path, "rb") as fh:
                files[rel] = hashlib.sha256(fh.read()).hexdigest()
    return files
