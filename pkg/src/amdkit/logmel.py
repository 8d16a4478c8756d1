"""Stabilized log-mel spectrogram patches for the embedding backbone.

The DSP parameters are fixed to the published configuration of the upstream
audio embedding model the backbone weights come from: 16 kHz input, 25 ms
periodic Hann window with a 10 ms hop, 512-point FFT, 64 triangular mel
bands spanning 125-7500 Hz on the HTK scale, magnitude (not power)
spectrum, and a log offset of 0.001.  A 960 ms frame is zero-padded by
240 samples so exactly 96 STFT steps fit.
"""

from __future__ import annotations

import numpy as np

from .frontend import FRAME_SAMPLES, SAMPLE_RATE

STFT_WINDOW = 400          # 25 ms
STFT_HOP = 160             # 10 ms
FFT_SIZE = 512
SPECTRUM_BINS = FFT_SIZE // 2 + 1   # 257
MEL_BANDS = 64
MEL_MIN_HZ = 125.0
MEL_MAX_HZ = 7500.0
LOG_OFFSET = 0.001
PATCH_STEPS = 96
PADDED_FRAME_SAMPLES = STFT_WINDOW + STFT_HOP * (PATCH_STEPS - 1)  # 15600


def hz_to_mel(hz):
    """HTK mel scale: m(f) = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def build_filterbank() -> np.ndarray:
    """Deterministic 257x64 triangular mel filterbank matrix.

    Row k maps magnitude-spectrum bin k (center k * 16000/512 Hz) onto the
    64 mel bands.  Bins outside 125-7500 Hz get all-zero rows.
    """
    bin_hz = np.arange(SPECTRUM_BINS, dtype=np.float64) * SAMPLE_RATE / FFT_SIZE
    bin_mel = hz_to_mel(bin_hz)
    edges = np.linspace(hz_to_mel(MEL_MIN_HZ), hz_to_mel(MEL_MAX_HZ), MEL_BANDS + 2)

    weights = np.zeros((SPECTRUM_BINS, MEL_BANDS), dtype=np.float64)
    for band in range(MEL_BANDS):
        lower, center, upper = edges[band], edges[band + 1], edges[band + 2]
        rising = (bin_mel - lower) / (center - lower)
        falling = (upper - bin_mel) / (upper - center)
        weights[:, band] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def _periodic_hann(length: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length, dtype=np.float64) / length)


_WINDOW = _periodic_hann(STFT_WINDOW)


def compute_patch(samples: np.ndarray, filterbank: np.ndarray) -> np.ndarray:
    """Stabilized log-mel patch (96 time steps x 64 bands, float32) for one frame.

    Every value is bounded below by ln(0.001), hit exactly on silent input.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape != (FRAME_SAMPLES,):
        raise ValueError(f"expected {FRAME_SAMPLES} samples, got shape {samples.shape}")

    padded = np.zeros(PADDED_FRAME_SAMPLES, dtype=np.float64)
    padded[:FRAME_SAMPLES] = samples

    starts = np.arange(PATCH_STEPS) * STFT_HOP
    windows = padded[starts[:, None] + np.arange(STFT_WINDOW)] * _WINDOW
    magnitudes = np.abs(np.fft.rfft(windows, n=FFT_SIZE, axis=1))   # (96, 257)

    mel = magnitudes @ filterbank                                    # (96, 64)
    return np.log(mel + LOG_OFFSET).astype(np.float32)
