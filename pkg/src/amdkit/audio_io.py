"""WAV file reading and writing for the offline tools."""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .errors import UnreadableFile, UnsupportedFormat
from .frontend import SUPPORTED_RATES, PcmChunk

_READABLE_DTYPES = (np.int16, np.int32, np.float32, np.float64)


def read_wav(path: str | os.PathLike) -> PcmChunk:
    """Read a mono 8 or 16 kHz WAV file into a PcmChunk.

    Integer PCM (16/32-bit) and IEEE float payloads are accepted; anything
    else raises UnsupportedFormat.  Unparseable or missing files raise
    UnreadableFile.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except (OSError, ValueError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    if data.ndim != 1:
        raise UnsupportedFormat(f"{path}: expected mono audio, got {data.ndim} channels")
    if rate not in SUPPORTED_RATES:
        raise UnsupportedFormat(f"{path}: sample rate {rate} not in {SUPPORTED_RATES}")
    if not any(data.dtype.type is t for t in _READABLE_DTYPES):
        raise UnsupportedFormat(f"{path}: unsupported sample dtype {data.dtype}")
    if data.dtype.type is np.int32:
        # 32-bit PCM carries its sign in the top bits; rescale to int16 range.
        data = (data.astype(np.float64) / 65536.0).astype(np.float32) / 32768.0
    return PcmChunk(samples=data, sample_rate_hz=int(rate))


def write_wav(path: str | os.PathLike, samples: np.ndarray, sample_rate_hz: int = 16_000) -> None:
    """Write mono 16-bit PCM.  Float input is clipped to [-1, 1) and rescaled."""
    samples = np.asarray(samples)
    if samples.ndim != 1:
        raise UnsupportedFormat(f"expected mono audio, got shape {samples.shape}")
    if np.issubdtype(samples.dtype, np.floating):
        scaled = np.clip(samples.astype(np.float64) * 32768.0, -32768.0, 32767.0)
        samples = scaled.astype(np.int16)
    elif samples.dtype != np.int16:
        raise UnsupportedFormat(f"unsupported sample dtype {samples.dtype}")
    wavfile.write(os.fspath(path), sample_rate_hz, samples)
