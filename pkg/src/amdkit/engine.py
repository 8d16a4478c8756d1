"""Shared immutable model resources and session construction."""

from __future__ import annotations

import numpy as np

from .backbone import BackboneGraph, load_backbone
from .bundle import read_bundle
from .classifier import ClassifierWeights, load_classifier
from .logmel import build_filterbank
from .session import CACHED, DetectionSession, EmbeddingFrameScorer, SessionParams


class DetectionEngine:
    """Loaded weights, backbone graph, and filterbank, shared by all sessions.

    Everything held here is immutable after construction, so one engine can
    serve any number of concurrent sessions.
    """

    def __init__(self, classifier_weights: ClassifierWeights, backbone_graph: BackboneGraph,
                 filterbank: np.ndarray | None = None) -> None:
        self.classifier_weights = classifier_weights
        self.backbone_graph = backbone_graph
        self.filterbank = build_filterbank() if filterbank is None else filterbank

    @classmethod
    def from_bundle(cls, path) -> DetectionEngine:
        """Load a bundle that carries both the classifier and backbone sections."""
        bundle = read_bundle(path)
        return cls(load_classifier(bundle), load_backbone(bundle))

    def new_scorer(self, mode: str = CACHED) -> EmbeddingFrameScorer:
        return EmbeddingFrameScorer(self.backbone_graph, self.filterbank,
                                    self.classifier_weights, mode=mode)

    def new_session(self, params: SessionParams | None = None,
                    mode: str = CACHED) -> DetectionSession:
        return DetectionSession(params or SessionParams(), self.new_scorer(mode))
