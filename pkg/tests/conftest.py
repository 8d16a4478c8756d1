import json

import numpy as np
import pytest

from amdkit import DetectionEngine, load_classifier, read_bundle
from fixturepaths import fixture_path


@pytest.fixture(scope="session")
def manifest() -> dict:
    with open(fixture_path("manifest.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def test_engine() -> DetectionEngine:
    """Engine with the committed classifier and the fast single-dense backbone."""
    return DetectionEngine.from_bundle(fixture_path("testnet", "engine.amdw"))


@pytest.fixture(scope="session")
def classifier_weights():
    return load_classifier(read_bundle(fixture_path("classifier", "weights.amdw")))


@pytest.fixture(scope="session")
def classifier_sequences():
    """(inputs, lengths, expected) for the committed oracle sequences."""
    inputs = np.load(fixture_path("classifier", "inputs.npy"))
    lengths = np.load(fixture_path("classifier", "lengths.npy"))
    expected = np.load(fixture_path("classifier", "expected.npy"))
    return inputs, lengths, expected
