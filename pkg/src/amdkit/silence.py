"""Per-frame loudness gating in decibels relative to full scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frontend import AudioFrame

DEFAULT_THRESHOLD_DBFS = -50.0
DEFAULT_FLOOR_DBFS = -120.0


@dataclass(frozen=True)
class SilenceConfig:
    """Silence gate settings.

    ``floor_dbfs`` clamps the loudness of all-zero frames so the scale stays
    finite.
    """

    threshold_dbfs: float = DEFAULT_THRESHOLD_DBFS
    floor_dbfs: float = DEFAULT_FLOOR_DBFS

    def __post_init__(self) -> None:
        if not self.floor_dbfs < self.threshold_dbfs < 0:
            raise ValueError(
                f"need floor_dbfs < threshold_dbfs < 0, "
                f"got floor={self.floor_dbfs} threshold={self.threshold_dbfs}"
            )


def frame_dbfs(frame: AudioFrame, floor_dbfs: float = DEFAULT_FLOOR_DBFS) -> float:
    """RMS loudness of the frame in dBFS, clamped below at ``floor_dbfs``.

    The RMS runs over the whole window including any zero-padded tail, so a
    padded final frame can only read quieter.
    """
    samples = np.asarray(frame.samples, dtype=np.float64)
    rms = float(np.sqrt(np.mean(samples * samples)))
    if rms <= 0.0:
        return floor_dbfs
    return max(20.0 * np.log10(rms), floor_dbfs)


def is_silent(frame: AudioFrame, config: SilenceConfig) -> bool:
    """True iff the frame's loudness is strictly below the threshold."""
    return frame_dbfs(frame, config.floor_dbfs) < config.threshold_dbfs
