"""Shared paths for the exporter test suite."""

from pathlib import Path

import pytest

ENGINE_FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"


@pytest.fixture(scope="session")
def engine_fixtures() -> Path:
    """Committed fixture pack consumed by the engine's test suite."""
    if not ENGINE_FIXTURES.is_dir():
        pytest.skip("engine fixture pack not checked out alongside the exporter")
    return ENGINE_FIXTURES
