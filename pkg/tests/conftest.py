# tests/conftest.py
"""
Shared test fixtures for the MACAM workbench test suite.

Strategy:
  - Unit tests run on tiny hand-sized tensors, codebooks and layer geometries
  - Training tests use a two-conv network on a small synthetic blob dataset
  - Desk-scale training checks are marked @pytest.mark.slow
"""
import os
import sys
from typing import Any, Dict

import numpy as np
import pytest

# ---------------------------------------------------------------------------
# Make `app` importable by prepending the project root to sys.path
# ---------------------------------------------------------------------------
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from app.features.activations.models import AnalogActConfig, DigitalActConfig
from app.features.energy.models import HardwareEnergyConfig
from app.features.energy.service import default_hardware
from app.features.macam.models import Codebook
from app.features.macam.service import LEVEL_PRESETS, build_codebook
from app.features.supermixer.models import ModelSpec, PhaseSchedule
from app.features.workbench.config_loader import parse_config
from app.features.workbench.datasets import synth_dataset
from app.features.workbench.models import Dataset, RunConfig


# ---------------------------------------------------------------------------
# Device and energy fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def rng() -> np.random.Generator:
    """Fresh deterministic random stream per test"""
    return np.random.default_rng(1234)


@pytest.fixture
def uniform_codebook() -> Codebook:
    """Five boundaries 0..4: midpoints 0.5..3.5, overflow maps to 4"""
    return build_codebook(LEVEL_PRESETS["MACAM-1"])


@pytest.fixture
def coarse_codebook() -> Codebook:
    """Three boundaries 0, 2, 4"""
    return build_codebook(LEVEL_PRESETS["MACAM-2"])


@pytest.fixture
def analog_cfg(uniform_codebook: Codebook) -> AnalogActConfig:
    return AnalogActConfig.from_codebook(uniform_codebook)


@pytest.fixture
def digital_cfg() -> DigitalActConfig:
    return DigitalActConfig(bits=6)


@pytest.fixture
def default_hw() -> HardwareEnergyConfig:
    """ADC-1 + MACAM-1 energies"""
    return default_hardware("ADC-1", "MACAM-1")


@pytest.fixture
def toy_hw() -> HardwareEnergyConfig:
    """Unit energies for hand-evaluated formulas (E_anlg=1, E_digi=10)"""
    return HardwareEnergyConfig(e_anlg=1.0, e_digi_adc=10.0, e_adc=10.0)


# ---------------------------------------------------------------------------
# Network and run fixtures
# ---------------------------------------------------------------------------

TINY_MODEL: Dict[str, Any] = {
    "image_size": 8,
    "num_classes": 3,
    "channels": [4, 6],
    "alpha_init": 4.0,
}

TINY_SCHEDULE: Dict[str, Any] = {
    "warmup_epochs": 2,
    "search_epochs": 3,
    "retrain_epochs": 2,
    "batch_size": 16,
}


@pytest.fixture
def tiny_spec() -> ModelSpec:
    """conv(4) -> conv(6) -> pool -> flatten -> linear(3): two activation sites"""
    return ModelSpec(**TINY_MODEL)


@pytest.fixture
def tiny_schedule() -> PhaseSchedule:
    return PhaseSchedule(**TINY_SCHEDULE)


@pytest.fixture
def tiny_data() -> Dataset:
    """3-class 8x8 synthetic blobs, 16 samples per class"""
    return synth_dataset(classes=3, samples_per_class=16, image_size=8, seed=3, noise=0.1)


@pytest.fixture
def tiny_raw_config() -> Dict[str, Any]:
    """Key-value tree of a complete tiny run"""
    return {
        "seed": 5,
        "model": dict(TINY_MODEL),
        "schedule": dict(TINY_SCHEDULE),
        "noise": {"weight_sigma": 0.05, "macam_sigma": 0.128, "mc_samples": 200},
        "dataset": {"kind": "synthetic", "classes": 3, "samples_per_class": 12, "image_size": 8, "noise": 0.1},
    }


@pytest.fixture
def tiny_config(tiny_raw_config: Dict[str, Any]) -> RunConfig:
    return parse_config(tiny_raw_config)


@pytest.fixture
def write_toml(tmp_path):
    """Write TOML text to a file under tmp_path and return its path"""
    def _write(text: str, name: str = "run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write
