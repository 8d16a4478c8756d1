"""Offline per-frame evaluation: confusion matrix and derived metrics.

Every frame of every file is scored as an independent instance — the
recurrent state is fresh at the start of each file, carries across that
file's frames, and no termination logic runs.  MACHINE is the positive
class throughout.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .engine import DetectionEngine
from .audio_io import read_wav
from .errors import MissingLabel
from .frontend import FrameAssembler, normalize_chunk
from .logmel import compute_patch
from .backbone import embed
from .classifier import fresh_state, step
from .session import HUMAN, MACHINE, label_for
from .silence import SilenceConfig, is_silent

DEFAULT_TARGET_MS = 4000
LABELS = (HUMAN, MACHINE)


def pad_or_trim(samples, target_ms: int = DEFAULT_TARGET_MS):
    """Force 16 kHz mono audio to an exact duration.

    Excess is clipped from the end; deficit is zero-padded at the end.  An
    exact-length input is returned unchanged (same object).
    """
    target = target_ms * 16_000 // 1000
    if samples.shape[0] == target:
        return samples
    if samples.shape[0] > target:
        return samples[:target]
    pad = np.zeros(target - samples.shape[0], dtype=samples.dtype)
    return np.concatenate([samples, pad])


@dataclass(frozen=True)
class ConfusionMatrix:
    """Frame counts with MACHINE as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @staticmethod
    def tally(actual: str, predicted: str) -> "ConfusionMatrix":
        """Matrix for a single frame outcome."""
        if actual == MACHINE:
            return ConfusionMatrix(tp=1) if predicted == MACHINE else ConfusionMatrix(fn=1)
        return ConfusionMatrix(fp=1) if predicted == MACHINE else ConfusionMatrix(tn=1)


def _ratio(numerator: int, denominator: int) -> float:
    if denominator == 0:
        raise ValueError("metric undefined: empty denominator")
    return numerator / denominator


def accuracy(matrix: ConfusionMatrix) -> float:
    return _ratio(matrix.tp + matrix.tn, matrix.total)


def precision(matrix: ConfusionMatrix) -> float:
    return _ratio(matrix.tp, matrix.tp + matrix.fp)


def sensitivity(matrix: ConfusionMatrix) -> float:
    return _ratio(matrix.tp, matrix.tp + matrix.fn)


def specificity(matrix: ConfusionMatrix) -> float:
    return _ratio(matrix.tn, matrix.tn + matrix.fp)


def metrics_percent(matrix: ConfusionMatrix) -> dict[str, float]:
    """All four metrics as percentages rounded to two decimals."""
    return {
        "accuracy": round(accuracy(matrix) * 100, 2),
        "precision": round(precision(matrix) * 100, 2),
        "sensitivity": round(sensitivity(matrix) * 100, 2),
        "specificity": round(specificity(matrix) * 100, 2),
    }


def load_manifest(path: str | os.PathLike) -> list[tuple[str, str]]:
    """Parse a ``path,label`` CSV; labels must be HUMAN or MACHINE."""
    entries: list[tuple[str, str]] = []
    with open(path, newline="") as handle:
        for row_number, row in enumerate(csv.reader(handle), start=1):
            if not row or (row_number == 1 and row[0].strip().lower() == "path"):
                continue
            if len(row) < 2 or not row[1].strip():
                raise MissingLabel(f"{path}:{row_number}: no label for {row[0]!r}")
            label = row[1].strip().upper()
            if label not in LABELS:
                raise MissingLabel(f"{path}:{row_number}: label must be one of {LABELS}, "
                                   f"got {row[1]!r}")
            entries.append((row[0].strip(), label))
    return entries


@dataclass(frozen=True)
class EvaluationReport:
    matrix: ConfusionMatrix
    files: int
    frames_scored: int
    frames_silent: int


def evaluate_file(engine: DetectionEngine, path: str | os.PathLike, actual: str, *,
                  silence_enabled: bool = False,
                  silence: SilenceConfig | None = None) -> tuple[ConfusionMatrix, int, int]:
    """Score one file frame-by-frame; returns (matrix, scored, silent)."""
    silence = silence or SilenceConfig()
    chunk = read_wav(path)
    assembler = FrameAssembler()
    frames = assembler.ingest(normalize_chunk(chunk))
    frames += assembler.flush()

    matrix = ConfusionMatrix()
    state = fresh_state()
    scored = silent = 0
    for frame in frames:
        if silence_enabled and is_silent(frame, silence):
            silent += 1
            continue
        patch = compute_patch(frame.samples, engine.filterbank)
        probability, state = step(engine.classifier_weights, state,
                                  embed(engine.backbone_graph, patch))
        matrix = matrix + ConfusionMatrix.tally(actual, label_for(probability))
        scored += 1
    return matrix, scored, silent


def evaluate(engine: DetectionEngine, entries: list[tuple[str, str]], *,
             base_dir: str | os.PathLike | None = None,
             silence_enabled: bool = False,
             silence: SilenceConfig | None = None) -> EvaluationReport:
    """Evaluate a labelled file list; order of entries never affects the matrix."""
    matrix = ConfusionMatrix()
    scored_total = silent_total = 0
    for rel_path, actual in entries:
        path = os.path.join(base_dir, rel_path) if base_dir is not None else rel_path
        file_matrix, scored, silent = evaluate_file(
            engine, path, actual, silence_enabled=silence_enabled, silence=silence)
        matrix = matrix + file_matrix
        scored_total += scored
        silent_total += silent
    return EvaluationReport(matrix=matrix, files=len(entries),
                            frames_scored=scored_total, frames_silent=silent_total)
