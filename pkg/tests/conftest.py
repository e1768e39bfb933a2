import copy
from pathlib import Path

import pytest

from fusion_monitor.sim.config import build_config

ROOT = Path(__file__).resolve().parent.parent

# two clusters of three nodes, far enough apart that a leak touches one cluster
BASE_SCENARIO = {
    "name": "unit",
    "seed": 1,
    "horizon": 100,
    "topology": {
        "clusters": [
            {
                "id": "c1",
                "nodes": [
                    {"id": "a1", "position": 0},
                    {"id": "a2", "position": 50},
                    {"id": "a3", "position": 100},
                ],
            },
            {
                "id": "c2",
                "nodes": [
                    {"id": "b1", "position": 1000},
                    {"id": "b2", "position": 1050},
                    {"id": "b3", "position": 1100},
                ],
            },
        ]
    },
}

ZERO_NOISE = {
    "pressure": {"baseline": 500.0, "noise_std": 0.0},
    "temperature": {"baseline": 20.0, "noise_std": 0.0},
    "humidity": {"baseline": 60.0, "noise_std": 0.0},
}


@pytest.fixture
def fixtures_dir() -> Path:
    return ROOT / "fixtures"


@pytest.fixture
def scenarios_dir() -> Path:
    return ROOT / "scenarios"


@pytest.fixture
def scenario_data():
    """Fresh copy of the base scenario mapping, with sections replaced"""
    def _data(**sections):
        data = copy.deepcopy(BASE_SCENARIO)
        data.update(copy.deepcopy(sections))
        return data
    return _data


@pytest.fixture
def make_config(scenario_data):
    def _make(overrides=(), **sections):
        return build_config(scenario_data(**sections), overrides)
    return _make


@pytest.fixture
def quiet_config(make_config):
    """Base scenario without noise or events"""
    def _make(overrides=(), **sections):
        sections.setdefault("signals", ZERO_NOISE)
        return make_config(overrides, **sections)
    return _make
