from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from thermocast.config import load_config
from thermocast.server import FieldEngine

REPO = Path(__file__).resolve().parent.parent

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def default_config():
    return load_config(None)


@pytest.fixture(scope="session")
def engine(default_config):
    # shared read-mostly engine; tests that publish ticks build their own
    return FieldEngine(default_config)


@pytest.fixture(scope="session")
def golden():
    return json.loads((REPO / "golden" / "frames.json").read_text())
