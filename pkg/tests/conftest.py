# tests/conftest.py - shared device fixtures
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings as hypothesis_settings

from vcmsim.config import DEFAULT_PARAMS, default_pulses
from vcmsim.device.noise import NoiseSpec, realize_devices
from vcmsim.device.pulses import ConductanceWindow
from vcmsim.device.state import DeviceState
from vcmsim.repositories.parameter_files import ParameterFileRepository

RUN_SLOW = os.getenv("VCMSIM_RUN_SLOW") == "1"
MNIST_DIR = os.getenv("VCMSIM_MNIST")
SYNTHETIC_COEFFS = Path(__file__).parent / "data" / "synthetic.coeffs"

# device pulses are slow compared with hypothesis' default deadline
hypothesis_settings.register_profile("vcmsim", deadline=None)
hypothesis_settings.load_profile("vcmsim")


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="set VCMSIM_RUN_SLOW=1 to run")
    skip_mnist = pytest.mark.skip(reason="set VCMSIM_MNIST to the IDX directory to run")
    for item in items:
        if "slow" in item.keywords and not RUN_SLOW:
            item.add_marker(skip_slow)
        if "mnist" in item.keywords and not MNIST_DIR:
            item.add_marker(skip_mnist)


@pytest.fixture
def cli_env(monkeypatch, tmp_path):
    """Keep the developer's VCMSIM_* settings and .env out of the tests"""
    for name in ("VCMSIM_PARAMS", "VCMSIM_COEFFS", "VCMSIM_OUT", "VCMSIM_MNIST", "VCMSIM_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("VCMSIM_OUT", str(tmp_path / "results"))
    monkeypatch.setenv("VCMSIM_COEFFS", str(SYNTHETIC_COEFFS))
    monkeypatch.chdir(tmp_path)


@pytest.fixture(scope="session")
def synthetic_coeffs_file() -> Path:
    return SYNTHETIC_COEFFS


@pytest.fixture(scope="session")
def params():
    loaded, _ = ParameterFileRepository().load_params(DEFAULT_PARAMS)
    return loaded


@pytest.fixture(scope="session")
def coeffs():
    """Synthetic device shared by the dynamics, crossbar and training tests"""
    loaded, _ = ParameterFileRepository().load_coeffs(SYNTHETIC_COEFFS)
    return loaded


@pytest.fixture(scope="session")
def window():
    return ConductanceWindow(G_min=2.4e-5, G_max=7.9e-5)


@pytest.fixture(scope="session")
def pulses():
    return default_pulses()


@pytest.fixture
def make_device(params, coeffs, window):
    """Noise-free device batch at a given conductance"""

    def _make(G=None, n=1, noise=None, first_id=0):
        ids = first_id + np.arange(n, dtype=np.uint64)
        return realize_devices(params, coeffs, noise or NoiseSpec(), window, ids, initial_conductance=G)

    return _make


@pytest.fixture
def nominal_state(params):
    """Single nominal device at a mid-range concentration"""

    def _make(N_d=None):
        return DeviceState(
            N_d=[N_d if N_d is not None else np.sqrt(params.N_d_min * params.N_d_max)],
            r_d=[params.r_d],
            l_d=[params.l_d],
            N_d_min=[params.N_d_min],
            N_d_max=[params.N_d_max],
            G_min=[2.4e-5],
            G_max=[7.9e-5],
            stream_id=[0],
            stream_pos=[0],
        )

    return _make


@pytest.fixture
def out_dir(tmp_path) -> Path:
    return tmp_path / "results"
