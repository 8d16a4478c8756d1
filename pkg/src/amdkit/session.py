"""Per-call orchestration: framing, silence gating, scoring, and termination.

A session turns pushed PCM chunks into per-frame classification results and
exactly one final verdict.  Detection stops when the confidence threshold
is met (no earlier than the minimum detection time), when the timeout
elapses, or when the stream ends.  All times are stream time, never wall
clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backbone import BackboneGraph, embed
from .classifier import CachedScorer, ClassifierWeights, StatefulScorer
from .errors import BadParams, SessionFinalized
from .frontend import SAMPLE_RATE, AudioFrame, FrameAssembler, PcmChunk, normalize_chunk
from .logmel import compute_patch
from .silence import SilenceConfig, is_silent

HUMAN = "HUMAN"
MACHINE = "MACHINE"

THRESHOLD_MET = "THRESHOLD_MET"
TIMEOUT = "TIMEOUT"
STREAM_ENDED = "STREAM_ENDED"

STATEFUL = "stateful"
CACHED = "cached"

DEFAULT_TIMEOUT_MS = 10_000
DEFAULT_CONFIDENCE_THRESHOLD = 0.9
DEFAULT_MIN_DETECTION_TIME_MS = 1_920   # three frame ends


def label_for(probability: float) -> str:
    return MACHINE if probability >= 0.5 else HUMAN


def confidence_for(probability: float) -> float:
    return max(probability, 1.0 - probability)


@dataclass(frozen=True)
class SessionParams:
    """User-tunable termination parameters; the speed vs reliability knob."""

    timeout_ms: int = DEFAULT_TIMEOUT_MS
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    min_detection_time_ms: int = DEFAULT_MIN_DETECTION_TIME_MS
    silence: SilenceConfig = field(default_factory=SilenceConfig)

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise BadParams(f"timeout_ms must be positive, got {self.timeout_ms}")
        if not 0.5 <= self.confidence_threshold <= 1.0:
            raise BadParams(
                f"confidence_threshold must be in [0.5, 1.0], got {self.confidence_threshold}"
            )
        if self.min_detection_time_ms < 0:
            raise BadParams(
                f"min_detection_time_ms must be >= 0, got {self.min_detection_time_ms}"
            )
        if self.min_detection_time_ms > self.timeout_ms:
            raise BadParams(
                f"min_detection_time_ms {self.min_detection_time_ms} exceeds "
                f"timeout_ms {self.timeout_ms}"
            )


@dataclass
class FrameResult:
    """Classification of one frame.  ``silent`` frames carry the previous
    non-silent probability (0.5 before any)."""

    frame_index: int
    end_ms: int
    probability: float
    silent: bool

    @property
    def confidence(self) -> float:
        return confidence_for(self.probability)

    @property
    def label(self) -> str:
        return label_for(self.probability)


@dataclass
class Verdict:
    """The single final decision of a session."""

    label: str
    confidence: float
    elapsed_ms: int
    reason: str
    frames_processed: int
    frames_skipped_silent: int


class EmbeddingFrameScorer:
    """Log-mel -> backbone -> classifier pipeline for non-silent frames.

    In stateful mode each frame advances a recurrent state; in cached mode
    the embedding is appended to a cache and the classifier re-runs over the
    whole prefix.  Both yield identical probabilities.
    """

    def __init__(self, graph: BackboneGraph, filterbank: np.ndarray,
                 weights: ClassifierWeights, mode: str = CACHED) -> None:
        if mode not in (STATEFUL, CACHED):
            raise ValueError(f"mode must be {STATEFUL!r} or {CACHED!r}, got {mode!r}")
        self._graph = graph
        self._filterbank = filterbank
        self.mode = mode
        self.scorer = StatefulScorer(weights) if mode == STATEFUL else CachedScorer(weights)

    def score_frame(self, frame: AudioFrame) -> float:
        patch = compute_patch(frame.samples, self._filterbank)
        embedding = embed(self._graph, patch)
        return self.scorer.score(embedding)

    @property
    def cached_embedding_count(self) -> int:
        return len(self.scorer.embeddings) if self.mode == CACHED else 0


class DetectionSession:
    """Single-owner state machine for one call.

    ``frame_scorer`` must provide ``score_frame(AudioFrame) -> float``;
    silence-gated frames never reach it and do not advance its state.
    """

    def __init__(self, params: SessionParams, frame_scorer) -> None:
        self.params = params
        self.scorer = frame_scorer
        self._assembler = FrameAssembler()
        self._last_probability = 0.5
        self._frames_processed = 0
        self._frames_skipped_silent = 0
        self._verdict: Verdict | None = None

    @property
    def verdict(self) -> Verdict | None:
        return self._verdict

    @property
    def finalized(self) -> bool:
        return self._verdict is not None

    def push_audio(self, chunk: PcmChunk) -> tuple[list[FrameResult], Verdict | None]:
        """Feed one chunk; returns new frame results and the verdict, if reached.

        Raises SessionFinalized once a verdict has been emitted.  No frames
        are processed past the verdict.
        """
        if self._verdict is not None:
            raise SessionFinalized("session already emitted its verdict")
        frames = self._assembler.ingest(normalize_chunk(chunk))
        return self._process(frames)

    def end_stream(self) -> tuple[list[FrameResult], Verdict | None]:
        """Flush the tail and, if no verdict fired, emit a STREAM_ENDED one.

        Idempotent: after finalization it returns ``([], None)``.
        """
        if self._verdict is not None:
            return [], None
        results, verdict = self._process(self._assembler.flush())
        if verdict is None:
            if self._frames_processed == 0:
                probability = 0.5
                label = HUMAN
            else:
                probability = self._last_probability
                label = label_for(probability)
            elapsed = self._assembler.total_ingested_samples * 1000 // SAMPLE_RATE
            verdict = self._finalize(label, confidence_for(probability), int(elapsed),
                                     STREAM_ENDED)
        return results, verdict

    def _process(self, frames: list[AudioFrame]) -> tuple[list[FrameResult], Verdict | None]:
        results: list[FrameResult] = []
        for frame in frames:
            if is_silent(frame, self.params.silence):
                probability = self._last_probability
                silent = True
                self._frames_skipped_silent += 1
            else:
                probability = self.scorer.score_frame(frame)
                silent = False
                self._last_probability = probability
            self._frames_processed += 1
            result = FrameResult(frame_index=frame.index, end_ms=frame.end_ms,
                                 probability=probability, silent=silent)
            results.append(result)
            verdict = self._check_termination(result)
            if verdict is not None:
                return results, verdict
        return results, None

    def _check_termination(self, result: FrameResult) -> Verdict | None:
        params = self.params
        if (result.confidence >= params.confidence_threshold
                and result.end_ms >= params.min_detection_time_ms):
            return self._finalize(result.label, result.confidence, result.end_ms,
                                  THRESHOLD_MET)
        if result.end_ms >= params.timeout_ms:
            # Frame ends land on a 480 ms grid; report the configured timeout.
            return self._finalize(result.label, result.confidence, params.timeout_ms,
                                  TIMEOUT)
        return None

    def _finalize(self, label: str, confidence: float, elapsed_ms: int,
                  reason: str) -> Verdict:
        self._verdict = Verdict(
            label=label,
            confidence=confidence,
            elapsed_ms=elapsed_ms,
            reason=reason,
            frames_processed=self._frames_processed,
            frames_skipped_silent=self._frames_skipped_silent,
        )
        return self._verdict
