"""Double-checks of the float64 reference math against independent oracles.

The reference module is what fixture expectations are computed from, so it
gets verified here against implementations that share no code with it:
scalar Python loops for the recurrent head, scipy.signal for the
convolutions, and hand-worked values for the small cases.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import signal as sps

from amdkit_exporter import reference
from amdkit_exporter.fixtures import classifier_tensors

GRU = reference.GRU_UNITS


def zero_head() -> dict[str, np.ndarray]:
    return {
        "dense1.kernel": np.zeros((1024, 32)),
        "dense1.bias": np.zeros(32),
        "gru.kernel": np.zeros((32, 3 * GRU)),
        "gru.recurrent_kernel": np.zeros((GRU, 3 * GRU)),
        "gru.input_bias": np.zeros(3 * GRU),
        "gru.recurrent_bias": np.zeros(3 * GRU),
        "dense2.kernel": np.zeros((GRU, 1)),
        "dense2.bias": np.zeros(1),
    }


def scalar_head_probabilities(tensors, embeddings):
    """The same gate equations written with pure-Python scalar arithmetic."""
    w1 = np.asarray(tensors["dense1.kernel"], dtype=np.float64)
    b1 = np.asarray(tensors["dense1.bias"], dtype=np.float64)
    wg = np.asarray(tensors["gru.kernel"], dtype=np.float64)
    ug = np.asarray(tensors["gru.recurrent_kernel"], dtype=np.float64)
    bg = np.asarray(tensors["gru.input_bias"], dtype=np.float64)
    cg = np.asarray(tensors["gru.recurrent_bias"], dtype=np.float64)
    w2 = np.asarray(tensors["dense2.kernel"], dtype=np.float64)
    b2 = np.asarray(tensors["dense2.bias"], dtype=np.float64)

    def logistic(v):
        return 1.0 / (1.0 + math.exp(-v))

    h = [0.0] * GRU
    out = []
    for e in np.asarray(embeddings, dtype=np.float64):
        x = [math.tanh(sum(e[i] * w1[i, j] for i in range(w1.shape[0])) + b1[j])
             for j in range(w1.shape[1])]
        gx = [sum(x[i] * wg[i, c] for i in range(len(x))) + bg[c]
              for c in range(3 * GRU)]
        gh = [sum(h[i] * ug[i, c] for i in range(GRU)) + cg[c]
              for c in range(3 * GRU)]
        z = [logistic(gx[c] + gh[c]) for c in range(GRU)]
        r = [logistic(gx[GRU + c] + gh[GRU + c]) for c in range(GRU)]
        hc = [math.tanh(gx[2 * GRU + c] + r[c] * gh[2 * GRU + c]) for c in range(GRU)]
        h = [z[c] * h[c] + (1.0 - z[c]) * hc[c] for c in range(GRU)]
        logit = sum(h[i] * w2[i, 0] for i in range(GRU)) + b2[0]
        out.append(logistic(logit))
    return np.array(out)


def scipy_conv2d(x, kernel, stride):
    """Cross-correlation with ceil-mode zero padding, built on correlate2d."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    oh, ow = -(-h // stride), -(-w // stride)
    ph = max((oh - 1) * stride + kh - h, 0)
    pw = max((ow - 1) * stride + kw - w, 0)
    xp = np.pad(x, ((ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0)))
    out = np.zeros((oh, ow, cout))
    for co in range(cout):
        acc = np.zeros((xp.shape[0] - kh + 1, xp.shape[1] - kw + 1))
        for ci in range(cin):
            acc += sps.correlate2d(xp[:, :, ci], kernel[:, :, ci, co], mode="valid")
        out[:, :, co] = acc[::stride, ::stride]
    return out


def scipy_depthwise(x, kernel, stride):
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w, channels = x.shape
    kh, kw, _ = kernel.shape
    oh, ow = -(-h // stride), -(-w // stride)
    ph = max((oh - 1) * stride + kh - h, 0)
    pw = max((ow - 1) * stride + kw - w, 0)
    xp = np.pad(x, ((ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0)))
    cols = [sps.correlate2d(xp[:, :, c], kernel[:, :, c], mode="valid")[::stride, ::stride]
            for c in range(channels)]
    return np.stack(cols, axis=-1)


class TestHeadProbabilities:

    def test_scalar_loop_agrees(self):
        rng = np.random.default_rng(7)
        tensors = classifier_tensors(rng)
        embeddings = rng.uniform(-1.0, 1.0, (4, 1024))
        fast = reference.head_probabilities(tensors, embeddings)
        slow = scalar_head_probabilities(tensors, embeddings)
        assert np.abs(fast - slow).max() < 1e-12

    def test_prefix_consistency(self):
        rng = np.random.default_rng(8)
        tensors = classifier_tensors(rng)
        embeddings = rng.uniform(-1.0, 1.0, (6, 1024))
        full = reference.head_probabilities(tensors, embeddings)
        for n in range(1, 7):
            prefix = reference.head_probabilities(tensors, embeddings[:n])
            assert np.array_equal(prefix, full[:n])

    def test_zero_weights_give_half(self):
        probabilities = reference.head_probabilities(
            zero_head(), np.ones((5, 1024)))
        assert np.array_equal(probabilities, np.full(5, 0.5))

    def test_saturated_update_gate_freezes_state(self):
        # Update gate pinned to 1 keeps the hidden state at zero, so the
        # output must stay at exactly 0.5 no matter what comes in.  This
        # only holds if the first third of the gate axis really is the
        # update gate.
        tensors = zero_head()
        tensors["gru.input_bias"] = np.concatenate(
            [np.full(GRU, 1000.0), np.zeros(2 * GRU)])
        tensors["dense2.kernel"] = np.ones((GRU, 1))
        rng = np.random.default_rng(9)
        with np.errstate(under="ignore"):
            probabilities = reference.head_probabilities(
                tensors, rng.uniform(-1.0, 1.0, (4, 1024)))
        assert np.array_equal(probabilities, np.full(4, 0.5))

    def test_candidate_bias_reaches_output(self):
        # With everything else zero: z = r = 1/2, candidate = tanh(0.7),
        # so after one step every hidden unit is tanh(0.7)/2 and the output
        # logit is 48 times that.
        tensors = zero_head()
        tensors["gru.input_bias"] = np.concatenate(
            [np.zeros(2 * GRU), np.full(GRU, 0.7)])
        tensors["dense2.kernel"] = np.ones((GRU, 1))
        probability = reference.head_probabilities(tensors, np.zeros((1, 1024)))[0]
        expected = 1.0 / (1.0 + math.exp(-GRU * 0.5 * math.tanh(0.7)))
        assert abs(probability - expected) < 1e-12


class TestSamePad:

    @pytest.mark.parametrize("size, kernel, stride, expected", [
        (9, 3, 1, (9, 1)),
        (9, 3, 2, (5, 1)),
        (6, 3, 2, (3, 0)),
        (5, 5, 2, (3, 2)),
        (8, 1, 1, (8, 0)),
        (96, 3, 2, (48, 0)),
    ])
    def test_hand_cases(self, size, kernel, stride, expected):
        assert reference.same_pad(size, kernel, stride) == expected


class TestConvReference:

    @pytest.mark.parametrize("shape, kshape, stride", [
        ((9, 7, 3), (3, 3, 3, 5), 1),
        ((9, 7, 3), (3, 3, 3, 5), 2),
        ((8, 8, 1), (1, 1, 1, 4), 1),
        ((6, 6, 2), (3, 3, 2, 3), 2),
        ((5, 5, 2), (5, 5, 2, 2), 2),
        ((11, 5, 2), (4, 4, 2, 3), 3),
    ])
    def test_conv2d_matches_scipy(self, shape, kshape, stride):
        rng = np.random.default_rng(hash((shape, stride)) % 2**32)
        x = rng.uniform(-1.0, 1.0, shape)
        kernel = rng.uniform(-1.0, 1.0, kshape)
        ours = reference.conv2d_reference(x, kernel, stride)
        theirs = scipy_conv2d(x, kernel, stride)
        assert ours.shape == theirs.shape
        assert np.abs(ours - theirs).max() < 1e-12

    @pytest.mark.parametrize("shape, kshape, stride", [
        ((10, 6, 4), (3, 3, 4), 1),
        ((10, 6, 4), (3, 3, 4), 2),
        ((7, 9, 2), (4, 4, 2), 3),
    ])
    def test_depthwise_matches_scipy(self, shape, kshape, stride):
        rng = np.random.default_rng(hash((shape, stride)) % 2**32)
        x = rng.uniform(-1.0, 1.0, shape)
        kernel = rng.uniform(-1.0, 1.0, kshape)
        ours = reference.depthwise_conv2d_reference(x, kernel, stride)
        theirs = scipy_depthwise(x, kernel, stride)
        assert ours.shape == theirs.shape
        assert np.abs(ours - theirs).max() < 1e-12

    def test_unit_kernel_is_identity(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1.0, 1.0, (5, 4, 1))
        out = reference.conv2d_reference(x, np.ones((1, 1, 1, 1)), 1)
        assert np.array_equal(out, x)

    def test_neighborhood_sum_hand_case(self):
        x = np.eye(3)[:, :, None]
        kernel = np.ones((3, 3, 1, 1))
        out = reference.conv2d_reference(x, kernel, 1)[:, :, 0]
        expected = np.array([[2.0, 2.0, 1.0],
                             [2.0, 3.0, 2.0],
                             [1.0, 2.0, 2.0]])
        assert np.array_equal(out, expected)


class TestBackboneForward:

    def test_dense_tanh_closed_form(self):
        rng = np.random.default_rng(4)
        patch = rng.uniform(-1.0, 1.0, (3, 2))
        kernel = rng.uniform(-1.0, 1.0, (6, 5))
        bias = rng.uniform(-0.1, 0.1, 5)
        layers = [{"op": "dense", "kernel": "k", "bias": "b", "activation": "tanh"}]
        out = reference.backbone_forward(layers, {"k": kernel, "b": bias}, patch)
        assert np.allclose(out, np.tanh(patch.reshape(-1) @ kernel + bias),
                           rtol=0, atol=1e-15)

    def test_conv_bias_and_relu(self):
        x = np.linspace(0.0, 1.0, 12).reshape(3, 4, 1)
        tensors = {"k": np.ones((1, 1, 1, 1)), "b": np.array([-0.5])}
        layers = [{"op": "conv2d", "kernel": "k", "bias": "b",
                   "stride": 1, "activation": "relu"}]
        out = reference.backbone_forward(layers, tensors, x)
        assert np.array_equal(out, np.maximum(x - 0.5, 0.0))

    def test_global_pool_averages_channels(self):
        x = np.stack([np.full((4, 4), 2.0), np.arange(16.0).reshape(4, 4)], axis=-1)
        out = reference.backbone_forward([{"op": "global_avg_pool"}], {}, x)
        assert np.array_equal(out, np.array([2.0, 7.5]))

    def test_unknown_op_rejected(self):
        with pytest.raises(ValueError, match="unknown op"):
            reference.backbone_forward([{"op": "max_pool"}], {}, np.zeros((2, 2)))


class TestLogmelReference:

    def test_patch_shape(self):
        patch = reference.logmel_patch_reference(np.zeros(reference.FRAME_SAMPLES))
        assert patch.shape == (reference.PATCH_STEPS, reference.MEL_BANDS)
        assert patch.dtype == np.float64

    def test_zero_signal_hits_log_offset(self):
        patch = reference.logmel_patch_reference(np.zeros(reference.FRAME_SAMPLES))
        assert np.array_equal(patch, np.full_like(patch, math.log(reference.LOG_OFFSET)))

    def test_filterbank_layout(self):
        weights = reference.filterbank_reference()
        assert weights.shape == (reference.FFT_SIZE // 2 + 1, reference.MEL_BANDS)
        assert weights.min() >= 0.0
        per_band = weights.sum(axis=0)
        assert per_band.min() > 0.0
        peaks = weights.argmax(axis=0)
        assert np.all(np.diff(peaks) > 0)

    def test_tone_lands_in_matching_band(self):
        t = np.arange(reference.FRAME_SAMPLES) / reference.SAMPLE_RATE
        tone = 0.5 * np.sin(2.0 * np.pi * 1000.0 * t)
        patch = reference.logmel_patch_reference(tone)
        weights = reference.filterbank_reference()
        tone_bin = round(1000.0 * reference.FFT_SIZE / reference.SAMPLE_RATE)
        assert patch.mean(axis=0).argmax() == weights[tone_bin].argmax()


class TestFrameStream:

    def test_empty_stream(self):
        assert reference.frame_stream(np.array([])) == []

    def test_window_and_tail_accounting(self):
        frames = reference.frame_stream(np.ones(64_000))
        assert len(frames) == 8
        assert [tail for _, _, tail in frames] == [0] * 7 + [320]
        assert all(window.shape == (reference.FRAME_SAMPLES,) for _, window, _ in frames)

    def test_exact_grid_needs_no_padding(self):
        frames = reference.frame_stream(np.ones(76_800))
        assert len(frames) == 9
        assert frames[-1][2] == 0

    def test_short_stream_single_padded_frame(self):
        frames = reference.frame_stream(np.ones(8_000))
        assert len(frames) == 1
        index, window, tail = frames[0]
        assert index == 0
        assert tail == (reference.FRAME_SAMPLES - 8_000) * 1000 // reference.SAMPLE_RATE
        assert np.array_equal(window[8_000:], np.zeros(reference.FRAME_SAMPLES - 8_000))

    def test_consecutive_windows_overlap_by_half(self):
        rng = np.random.default_rng(5)
        frames = reference.frame_stream(rng.uniform(-1.0, 1.0, 40_000))
        for (_, previous, _), (_, current, _) in zip(frames, frames[1:]):
            assert np.array_equal(previous[reference.HOP_SAMPLES:],
                                  current[:reference.FRAME_SAMPLES - reference.HOP_SAMPLES])


class TestDbfs:

    def test_full_scale_square_is_zero(self):
        assert reference.dbfs(np.ones(100)) == 0.0

    def test_half_scale(self):
        assert abs(reference.dbfs(np.full(64, 0.5)) - 20.0 * math.log10(0.5)) < 1e-12

    def test_silence_clamps_to_floor(self):
        assert reference.dbfs(np.zeros(10)) == -120.0
        assert reference.dbfs(np.full(10, 1e-7)) == -120.0

    def test_custom_floor(self):
        assert reference.dbfs(np.zeros(10), floor=-90.0) == -90.0


class TestSimulateSession:

    def test_stream_ended(self):
        outcome = reference.simulate_session([0.6, 0.7], [960, 1440], 32_000)
        verdict = outcome["verdict"]
        assert verdict == {"label": "MACHINE", "confidence": 0.7, "elapsed_ms": 2000,
                           "reason": "STREAM_ENDED", "frames_processed": 2,
                           "frames_skipped_silent": 0}

    def test_threshold_respects_minimum_time(self):
        probabilities = [0.95, 0.95, 0.95]
        ends = [960, 1440, 1920]
        fired = reference.simulate_session(probabilities, ends, 64_000)
        assert fired["verdict"]["reason"] == "THRESHOLD_MET"
        assert fired["verdict"]["elapsed_ms"] == 1920
        assert fired["verdict"]["frames_processed"] == 3

        held = reference.simulate_session(probabilities, ends, 64_000,
                                          min_detection_time_ms=2400)
        assert held["verdict"]["reason"] == "STREAM_ENDED"

    def test_timeout_clamps_elapsed(self):
        outcome = reference.simulate_session(
            [0.5] * 4, [960, 1440, 1920, 2400], 64_000,
            timeout_ms=2000, confidence_threshold=1.0)
        verdict = outcome["verdict"]
        assert verdict["reason"] == "TIMEOUT"
        assert verdict["elapsed_ms"] == 2000
        assert verdict["frames_processed"] == 4

    def test_threshold_wins_ties_with_timeout(self):
        outcome = reference.simulate_session(
            [0.99], [2000], 64_000, timeout_ms=2000,
            confidence_threshold=0.9, min_detection_time_ms=0)
        assert outcome["verdict"]["reason"] == "THRESHOLD_MET"

    def test_silent_frames_carry_last_probability(self):
        outcome = reference.simulate_session(
            [None, 0.8, None], [960, 1440, 1920], 40_000, confidence_threshold=1.0)
        frames = outcome["frames"]
        assert [f["probability"] for f in frames] == [0.5, 0.8, 0.8]
        assert [f["silent"] for f in frames] == [True, False, True]
        verdict = outcome["verdict"]
        assert verdict["frames_skipped_silent"] == 2
        assert verdict["label"] == "MACHINE"
        assert verdict["confidence"] == 0.8

    def test_empty_stream_defaults_human(self):
        verdict = reference.simulate_session([], [], 0)["verdict"]
        assert verdict == {"label": "HUMAN", "confidence": 0.5, "elapsed_ms": 0,
                           "reason": "STREAM_ENDED", "frames_processed": 0,
                           "frames_skipped_silent": 0}
