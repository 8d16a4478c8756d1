"""Chunked PCM ingestion and fixed-length frame assembly.

Incoming audio arrives as arbitrarily sized mono chunks at 8 or 16 kHz.
Chunks are normalized to unit-scale 16 kHz samples and assembled into
overlapping 960 ms analysis frames emitted every 480 ms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedFormat

SAMPLE_RATE = 16_000
FRAME_MS = 960
HOP_MS = 480
FRAME_SAMPLES = FRAME_MS * SAMPLE_RATE // 1000   # 15360
HOP_SAMPLES = HOP_MS * SAMPLE_RATE // 1000       # 7680

SUPPORTED_RATES = (8_000, 16_000)


@dataclass
class PcmChunk:
    """One chunk of mono PCM as delivered by a media stream.

    ``samples`` may be 16-bit signed integers (any integer dtype, s16 range)
    or unit-scale reals in [-1.0, 1.0].
    """

    samples: np.ndarray
    sample_rate_hz: int
    channel_count: int = 1

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples)
        if self.channel_count != 1:
            raise UnsupportedFormat(f"expected mono audio, got {self.channel_count} channels")
        if self.sample_rate_hz not in SUPPORTED_RATES:
            raise UnsupportedFormat(f"unsupported sample rate {self.sample_rate_hz} Hz")
        if self.samples.ndim > 1:
            raise UnsupportedFormat(f"expected 1-D sample array, got shape {self.samples.shape}")


@dataclass
class AudioFrame:
    """One 960 ms analysis window with stream-time coordinates.

    ``padded_tail_ms`` is nonzero only for frames completed by zero-padding
    at stream end.
    """

    samples: np.ndarray        # FRAME_SAMPLES float32 values in [-1, 1]
    index: int
    padded_tail_ms: int = 0

    @property
    def start_ms(self) -> int:
        return self.index * HOP_MS

    @property
    def end_ms(self) -> int:
        return self.index * HOP_MS + FRAME_MS


def normalize_chunk(chunk: PcmChunk) -> np.ndarray:
    """Return the chunk as unit-scale float32 samples at 16 kHz.

    16-bit integers are mapped by s/32768.  8 kHz input is upsampled x2 by
    linear interpolation (midpoints inserted, final sample held).  Float
    input is clipped to [-1, 1].
    """
    samples = chunk.samples
    if samples.dtype.kind in "iu":
        out = samples.astype(np.float32) / np.float32(32768.0)
    else:
        out = np.clip(samples.astype(np.float32, copy=True), -1.0, 1.0)

    if chunk.sample_rate_hz == 8_000:
        out = _upsample_x2(out)
    return out


def _upsample_x2(x: np.ndarray) -> np.ndarray:
    if x.size == 0:
        return x
    out = np.empty(2 * x.size, dtype=np.float32)
    out[0::2] = x
    if x.size > 1:
        out[1:-1:2] = (x[:-1] + x[1:]) * np.float32(0.5)
    out[-1] = x[-1]  # no successor to interpolate toward
    return out


class FrameAssembler:
    """Assembles normalized 16 kHz samples into overlapping analysis frames.

    Frame ``k`` covers samples ``[k*HOP, k*HOP + FRAME)`` and is emitted as
    soon as its full window is available, so cumulative output is identical
    for any chunking of the same stream.  Not safe for concurrent mutation;
    one assembler per stream.
    """

    def __init__(self) -> None:
        self._pending = np.empty(0, dtype=np.float32)
        self._base = 0                 # absolute index of _pending[0]
        self._next_index = 0
        self._total_samples = 0
        self._flushed = False

    @property
    def total_ingested_ms(self) -> float:
        return self._total_samples * 1000 / SAMPLE_RATE

    @property
    def total_ingested_samples(self) -> int:
        return self._total_samples

    def ingest(self, samples: np.ndarray) -> list[AudioFrame]:
        """Add samples; return every frame whose 960 ms window is now complete."""
        if self._flushed:
            raise ValueError("cannot ingest after flush")
        samples = np.asarray(samples, dtype=np.float32)
        if samples.size:
            self._pending = np.concatenate([self._pending, samples])
            self._total_samples += samples.size
        return self._drain()

    def flush(self) -> list[AudioFrame]:
        """Zero-pad the residual tail and emit the remaining frames.

        The stream is padded so its length lands exactly on the frame grid
        (a stream shorter than one window pads to a single frame).  A second
        flush, or a flush of an empty stream, emits nothing.
        """
        if self._flushed:
            return []
        self._flushed = True
        if self._total_samples == 0:
            return []

        if self._total_samples <= FRAME_SAMPLES:
            frame_count = 1
        else:
            frame_count = 1 + -(-(self._total_samples - FRAME_SAMPLES) // HOP_SAMPLES)
        padded_total = FRAME_SAMPLES + HOP_SAMPLES * (frame_count - 1)

        pad = padded_total - self._total_samples
        if pad > 0:
            self._pending = np.concatenate([self._pending, np.zeros(pad, dtype=np.float32)])

        frames: list[AudioFrame] = []
        while self._next_index < frame_count:
            frames.append(self._emit_next(real_total=self._total_samples))
        return frames

    def _drain(self) -> list[AudioFrame]:
        frames: list[AudioFrame] = []
        while self._base + self._pending.size >= self._next_index * HOP_SAMPLES + FRAME_SAMPLES:
            frames.append(self._emit_next(real_total=None))
        return frames

    def _emit_next(self, real_total: int | None) -> AudioFrame:
        start = self._next_index * HOP_SAMPLES
        end = start + FRAME_SAMPLES
        window = self._pending[start - self._base : end - self._base].copy()
        padded_tail_ms = 0
        if real_total is not None and end > real_total:
            padded_tail_ms = (end - real_total) * 1000 // SAMPLE_RATE
        frame = AudioFrame(samples=window, index=self._next_index, padded_tail_ms=padded_tail_ms)
        self._next_index += 1
        # Overlapped samples before the next frame's start are no longer needed.
        keep_from = self._next_index * HOP_SAMPLES
        if keep_from > self._base:
            self._pending = self._pending[keep_from - self._base :]
            self._base = keep_from
        return frame


def frame_count_for_duration_ms(duration_ms: float) -> int:
    """Number of frames a stream of the given duration yields after flush."""
    if duration_ms <= 0:
        return 0
    if duration_ms <= FRAME_MS:
        return 1
    return 1 + -int(-(duration_ms - FRAME_MS) // HOP_MS)
