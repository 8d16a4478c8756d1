"""Per-component latency benchmark with outlier-trimmed summary statistics."""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .backbone import embed
from .classifier import step, fresh_state
from .engine import DetectionEngine
from .frontend import FRAME_SAMPLES, AudioFrame
from .logmel import compute_patch
from .silence import SilenceConfig, is_silent

LOGMEL_BACKBONE = "LOGMEL+BACKBONE"
CLASSIFIER = "CLASSIFIER"
SILENCE = "SILENCE"
COMPONENTS = (LOGMEL_BACKBONE, CLASSIFIER, SILENCE)

TRIM_FRACTION = 0.02
MIN_FRAMES = 100


@dataclass(frozen=True)
class LatencySample:
    component: str
    frame_index: int
    duration_us: float

    def __post_init__(self) -> None:
        if self.component not in COMPONENTS:
            raise ValueError(f"component must be one of {COMPONENTS}, got {self.component!r}")
        if self.duration_us < 0:
            raise ValueError(f"duration_us must be nonnegative, got {self.duration_us}")


def trimmed_mean(values: Sequence[float], trim_fraction: float = TRIM_FRACTION) -> float:
    """Mean after dropping the lowest and highest ``trim_fraction`` of samples.

    The drop count per side is ``int(n * trim_fraction)``, so fewer than
    ``1/trim_fraction`` samples are returned untrimmed.
    """
    if not values:
        raise ValueError("trimmed_mean of empty sequence")
    ordered = sorted(values)
    k = int(len(ordered) * trim_fraction)
    retained = ordered[k:len(ordered) - k] if k else ordered
    return float(sum(retained) / len(retained))


def bench(engine: DetectionEngine, n_frames: int, *,
          rng: np.random.Generator | None = None,
          silence: SilenceConfig | None = None) -> list[LatencySample]:
    """Time each pipeline component once per synthetic frame.

    Frames are random full-scale noise so the silence gate never trips and
    every component does real work on every frame.
    """
    if n_frames < MIN_FRAMES:
        raise ValueError(f"n_frames must be at least {MIN_FRAMES}, got {n_frames}")
    rng = rng or np.random.default_rng(0)
    silence = silence or SilenceConfig()

    samples: list[LatencySample] = []
    state = fresh_state()
    for index in range(n_frames):
        audio = rng.uniform(-0.5, 0.5, FRAME_SAMPLES).astype(np.float32)
        frame = AudioFrame(samples=audio, index=index, padded_tail_ms=0)

        start = time.perf_counter_ns()
        is_silent(frame, silence)
        samples.append(LatencySample(SILENCE, index, (time.perf_counter_ns() - start) / 1000))

        start = time.perf_counter_ns()
        embedding = embed(engine.backbone_graph, compute_patch(audio, engine.filterbank))
        samples.append(
            LatencySample(LOGMEL_BACKBONE, index, (time.perf_counter_ns() - start) / 1000))

        start = time.perf_counter_ns()
        _, state = step(engine.classifier_weights, state, embedding)
        samples.append(LatencySample(CLASSIFIER, index, (time.perf_counter_ns() - start) / 1000))
    return samples


def summarize(samples: Iterable[LatencySample]) -> dict[str, float]:
    """Trimmed-mean duration in microseconds per component."""
    by_component: dict[str, list[float]] = {}
    for sample in samples:
        by_component.setdefault(sample.component, []).append(sample.duration_us)
    return {component: trimmed_mean(values) for component, values in by_component.items()}


def write_csv(samples: Iterable[LatencySample], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["component", "frame_index", "duration_us"])
        for sample in samples:
            writer.writerow([sample.component, sample.frame_index, sample.duration_us])
