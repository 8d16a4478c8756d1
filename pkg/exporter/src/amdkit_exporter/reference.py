"""Float64 reference implementations used to compute fixture expectations.

Everything in this module is written directly from the layer equations and
runs entirely in float64, with no imports from the engine package.  Fixture
expected values produced here are therefore an independent oracle for the
engine's float32-boundary arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

SAMPLE_RATE = 16_000
FRAME_SAMPLES = 15_360
HOP_SAMPLES = 7_680

STFT_WINDOW = 400
STFT_HOP = 160
FFT_SIZE = 512
MEL_BANDS = 64
MEL_MIN_HZ = 125.0
MEL_MAX_HZ = 7500.0
LOG_OFFSET = 0.001
PATCH_STEPS = 96

GRU_UNITS = 48


# ---------------------------------------------------------------------------
# Recurrent classifier head
# ---------------------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def head_probabilities(tensors: dict[str, np.ndarray], embeddings: np.ndarray) -> np.ndarray:
    """Per-step machine probabilities for one embedding sequence.

    Gate equations (reset-after, gate order update ``z`` | reset ``r`` |
    candidate ``h``, separate input and recurrent biases)::

        z  = sigmoid(x W_z + b_z + h U_z + c_z)
        r  = sigmoid(x W_r + b_r + h U_r + c_r)
        hc = tanh(x W_h + b_h + r * (h U_h + c_h))
        h' = z * h + (1 - z) * hc
    """
    w1 = np.asarray(tensors["dense1.kernel"], dtype=np.float64)
    b1 = np.asarray(tensors["dense1.bias"], dtype=np.float64)
    wg = np.asarray(tensors["gru.kernel"], dtype=np.float64)
    ug = np.asarray(tensors["gru.recurrent_kernel"], dtype=np.float64)
    bg = np.asarray(tensors["gru.input_bias"], dtype=np.float64)
    cg = np.asarray(tensors["gru.recurrent_bias"], dtype=np.float64)
    w2 = np.asarray(tensors["dense2.kernel"], dtype=np.float64)
    b2 = np.asarray(tensors["dense2.bias"], dtype=np.float64)

    g = GRU_UNITS
    h = np.zeros(g, dtype=np.float64)
    probabilities = []
    for e in np.asarray(embeddings, dtype=np.float64):
        x = np.tanh(e @ w1 + b1)
        gx = x @ wg + bg
        gh = h @ ug + cg
        z = sigmoid(gx[:g] + gh[:g])
        r = sigmoid(gx[g:2 * g] + gh[g:2 * g])
        hc = np.tanh(gx[2 * g:] + r * gh[2 * g:])
        h = z * h + (1.0 - z) * hc
        probabilities.append(float(sigmoid(h @ w2 + b2)[0]))
    return np.array(probabilities, dtype=np.float64)


# ---------------------------------------------------------------------------
# Convolution ops, written as plain loops
# ---------------------------------------------------------------------------

def same_pad(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(output size, leading pad) for SAME padding."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2


def conv2d_reference(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Sextuple-loop 2-D convolution, SAME padding, float64."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    oh, ph = same_pad(h, kh, stride)
    ow, pw = same_pad(w, kw, stride)

    out = np.zeros((oh, ow, cout), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            for co in range(cout):
                acc = 0.0
                for ki in range(kh):
                    for kj in range(kw):
                        si = i * stride + ki - ph
                        sj = j * stride + kj - pw
                        if 0 <= si < h and 0 <= sj < w:
                            for ci in range(cin):
                                acc += x[si, sj, ci] * kernel[ki, kj, ci, co]
                out[i, j, co] = acc
    return out


def depthwise_conv2d_reference(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Per-channel loop convolution, SAME padding, float64."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w, channels = x.shape
    kh, kw, _ = kernel.shape
    oh, ph = same_pad(h, kh, stride)
    ow, pw = same_pad(w, kw, stride)

    out = np.zeros((oh, ow, channels), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            for c in range(channels):
                acc = 0.0
                for ki in range(kh):
                    for kj in range(kw):
                        si = i * stride + ki - ph
                        sj = j * stride + kj - pw
                        if 0 <= si < h and 0 <= sj < w:
                            acc += x[si, sj, c] * kernel[ki, kj, c]
                out[i, j, c] = acc
    return out


def backbone_forward(layers: list[dict], tensors: dict[str, np.ndarray],
                     patch: np.ndarray) -> np.ndarray:
    """Run a backbone layer list with the reference ops, float64 throughout."""
    x = np.asarray(patch, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    for layer in layers:
        op = layer["op"]
        if op in ("conv2d", "depthwise_conv2d"):
            kernel = np.asarray(tensors[layer["kernel"]], dtype=np.float64)
            bias = np.asarray(tensors[layer["bias"]], dtype=np.float64)
            stride = int(layer.get("stride", 1))
            if op == "conv2d":
                x = conv2d_reference(x, kernel, stride)
            else:
                x = depthwise_conv2d_reference(x, kernel, stride)
            x = x + bias
            if layer.get("activation", "relu") == "relu":
                x = np.maximum(x, 0.0)
        elif op == "global_avg_pool":
            x = x.mean(axis=(0, 1))
        elif op == "dense":
            kernel = np.asarray(tensors[layer["kernel"]], dtype=np.float64)
            bias = np.asarray(tensors[layer["bias"]], dtype=np.float64)
            x = x.reshape(-1) @ kernel + bias
            activation = layer.get("activation", "none")
            if activation == "tanh":
                x = np.tanh(x)
            elif activation == "relu":
                x = np.maximum(x, 0.0)
        else:
            raise ValueError(f"unknown op {op!r}")
    return x


# ---------------------------------------------------------------------------
# Log-mel front end
# ---------------------------------------------------------------------------

def mel_of_hz(hz: float) -> float:
    return 2595.0 * math.log10(1.0 + hz / 700.0)


def filterbank_reference() -> np.ndarray:
    """257x64 triangular filterbank built band-by-band from the mel formula."""
    bins = FFT_SIZE // 2 + 1
    edges = [mel_of_hz(MEL_MIN_HZ)
             + (mel_of_hz(MEL_MAX_HZ) - mel_of_hz(MEL_MIN_HZ)) * i / (MEL_BANDS + 1)
             for i in range(MEL_BANDS + 2)]
    weights = np.zeros((bins, MEL_BANDS), dtype=np.float64)
    for k in range(bins):
        m = mel_of_hz(k * SAMPLE_RATE / FFT_SIZE)
        for band in range(MEL_BANDS):
            lower, center, upper = edges[band], edges[band + 1], edges[band + 2]
            rising = (m - lower) / (center - lower)
            falling = (upper - m) / (upper - center)
            weights[k, band] = max(0.0, min(rising, falling))
    return weights


def logmel_patch_reference(samples: np.ndarray,
                           filterbank: np.ndarray | None = None) -> np.ndarray:
    """96x64 stabilized log-mel patch for one 960 ms frame, float64."""
    samples = np.asarray(samples, dtype=np.float64)
    assert samples.shape == (FRAME_SAMPLES,)
    if filterbank is None:
        filterbank = filterbank_reference()
    window = 0.5 - 0.5 * np.cos(
        2.0 * np.pi * np.arange(STFT_WINDOW, dtype=np.float64) / STFT_WINDOW)

    padded = np.concatenate([samples, np.zeros(STFT_WINDOW + STFT_HOP * (PATCH_STEPS - 1)
                                               - FRAME_SAMPLES)])
    rows = []
    for step in range(PATCH_STEPS):
        segment = padded[step * STFT_HOP: step * STFT_HOP + STFT_WINDOW] * window
        magnitude = np.abs(np.fft.rfft(segment, n=FFT_SIZE))
        rows.append(np.log(magnitude @ filterbank + LOG_OFFSET))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Stream framing, silence gate, and session termination
# ---------------------------------------------------------------------------

def frame_stream(samples: np.ndarray) -> list[tuple[int, np.ndarray, int]]:
    """Split a 16 kHz stream into (index, window, padded_tail_ms) triples.

    The stream is zero-padded at the end onto the frame grid; an empty
    stream yields no frames.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n == 0:
        return []
    count = 1 if n <= FRAME_SAMPLES else 1 + math.ceil((n - FRAME_SAMPLES) / HOP_SAMPLES)
    padded = np.concatenate(
        [samples, np.zeros(FRAME_SAMPLES + HOP_SAMPLES * (count - 1) - n)])
    frames = []
    for index in range(count):
        window = padded[index * HOP_SAMPLES: index * HOP_SAMPLES + FRAME_SAMPLES]
        end = index * HOP_SAMPLES + FRAME_SAMPLES
        tail = max(end - n, 0) * 1000 // SAMPLE_RATE
        frames.append((index, window, int(tail)))
    return frames


def dbfs(window: np.ndarray, floor: float = -120.0) -> float:
    rms = float(np.sqrt(np.mean(np.square(np.asarray(window, dtype=np.float64)))))
    if rms <= 0.0:
        return floor
    return max(20.0 * math.log10(rms), floor)


def simulate_session(probabilities: list[float | None], end_ms_list: list[int],
                     total_samples: int, *, timeout_ms: int = 10_000,
                     confidence_threshold: float = 0.9,
                     min_detection_time_ms: int = 1_920) -> dict:
    """Replay the termination state machine over per-frame probabilities.

    ``probabilities[i]`` is None for a silence-skipped frame (the previous
    probability carries over; 0.5 before any scored frame).  Returns the
    frame results actually emitted plus the final verdict fields.
    """
    last_probability = 0.5
    frames = []
    skipped = 0
    verdict = None
    for probability, end_ms in zip(probabilities, end_ms_list):
        silent = probability is None
        if silent:
            skipped += 1
        else:
            last_probability = probability
        frames.append({"end_ms": end_ms, "silent": silent, "probability": last_probability})
        confidence = max(last_probability, 1.0 - last_probability)
        label = "MACHINE" if last_probability >= 0.5 else "HUMAN"
        if confidence >= confidence_threshold and end_ms >= min_detection_time_ms:
            verdict = {"label": label, "confidence": confidence, "elapsed_ms": end_ms,
                       "reason": "THRESHOLD_MET"}
            break
        if end_ms >= timeout_ms:
            verdict = {"label": label, "confidence": confidence,
                       "elapsed_ms": min(end_ms, timeout_ms), "reason": "TIMEOUT"}
            break
    if verdict is None:
        confidence = max(last_probability, 1.0 - last_probability)
        label = "MACHINE" if last_probability >= 0.5 else "HUMAN"
        if not frames:
            label, confidence = "HUMAN", 0.5
        verdict = {"label": label, "confidence": confidence,
                   "elapsed_ms": total_samples * 1000 // SAMPLE_RATE,
                   "reason": "STREAM_ENDED"}
    verdict["frames_processed"] = len(frames)
    verdict["frames_skipped_silent"] = skipped
    return {"frames": frames, "verdict": verdict}
