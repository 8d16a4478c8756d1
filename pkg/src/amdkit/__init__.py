"""Real-time answering-machine detection for call audio streams.

The pipeline: PCM chunks are normalized and assembled into overlapping
960 ms frames; loud frames become log-mel patches, then 1024-d embeddings
(convolutional backbone), then a human/machine probability (recurrent
classifier); a per-session state machine turns the probability trajectory
into a single final verdict.
"""

from .backbone import BackboneGraph, embed, load_backbone
from .bundle import WeightBundle, read_bundle, write_bundle
from .classifier import (
    EXPECTED_PARAMETER_COUNT,
    CachedScorer,
    ClassifierState,
    ClassifierWeights,
    StatefulScorer,
    fresh_state,
    load_classifier,
    parameter_count,
    run_sequence,
    step,
)
from .engine import DetectionEngine
from .errors import (
    AmdError,
    BadParams,
    DuplicateSession,
    EmptySequence,
    FormatError,
    MissingLabel,
    NonFiniteInput,
    SessionFinalized,
    ShapeError,
    UnknownSession,
    UnreadableFile,
    UnsupportedFormat,
)
from .frontend import (
    FRAME_MS,
    FRAME_SAMPLES,
    HOP_MS,
    HOP_SAMPLES,
    SAMPLE_RATE,
    AudioFrame,
    FrameAssembler,
    PcmChunk,
    frame_count_for_duration_ms,
    normalize_chunk,
)
from .logmel import build_filterbank, compute_patch
from .session import (
    CACHED,
    HUMAN,
    MACHINE,
    STATEFUL,
    STREAM_ENDED,
    THRESHOLD_MET,
    TIMEOUT,
    DetectionSession,
    FrameResult,
    SessionParams,
    Verdict,
    confidence_for,
    label_for,
)
from .silence import SilenceConfig, frame_dbfs, is_silent

__version__ = "0.1.0"

__all__ = [
    "AmdError",
    "AudioFrame",
    "BackboneGraph",
    "BadParams",
    "CACHED",
    "CachedScorer",
    "ClassifierState",
    "ClassifierWeights",
    "DetectionEngine",
    "DetectionSession",
    "DuplicateSession",
    "EmptySequence",
    "EXPECTED_PARAMETER_COUNT",
    "FormatError",
    "FRAME_MS",
    "FRAME_SAMPLES",
    "FrameAssembler",
    "FrameResult",
    "HOP_MS",
    "HOP_SAMPLES",
    "HUMAN",
    "MACHINE",
    "MissingLabel",
    "NonFiniteInput",
    "PcmChunk",
    "SAMPLE_RATE",
    "SessionFinalized",
    "SessionParams",
    "ShapeError",
    "SilenceConfig",
    "STATEFUL",
    "StatefulScorer",
    "STREAM_ENDED",
    "THRESHOLD_MET",
    "TIMEOUT",
    "UnknownSession",
    "UnreadableFile",
    "UnsupportedFormat",
    "Verdict",
    "WeightBundle",
    "build_filterbank",
    "compute_patch",
    "confidence_for",
    "embed",
    "frame_count_for_duration_ms",
    "frame_dbfs",
    "fresh_state",
    "is_silent",
    "label_for",
    "load_backbone",
    "load_classifier",
    "normalize_chunk",
    "parameter_count",
    "read_bundle",
    "run_sequence",
    "step",
    "write_bundle",
    "__version__",
]
