from pathlib import Path

import pytest
import yaml

from vcmsim.config import (
    DATA_DIR,
    DEFAULT_PARAMS,
    REALISTIC_CONFIG,
    NoiseSelector,
    RunConfig,
    Settings,
    dump_run_config,
    load_run_config,
    select_noise,
)
from vcmsim.errors import InvalidArgumentError, ParameterFileError
from vcmsim.training.trainer import Backend


class TestShippedConfigs:
    def test_noise_free_config(self):
        """The ideal-device config trains on tiles without noise"""
        config = load_run_config(DATA_DIR / "configs" / "noise_free.yaml")
        assert config.train.backend is Backend.ANALOG
        assert not config.noise.has_d2d
        assert not config.noise.has_c2c
        assert config.pulses.set.amplitude == pytest.approx(-0.75)
        assert config.window.read_voltage == pytest.approx(-0.2)

    def test_realistic_config(self):
        """The realistic mix turns on both noise kinds with clamped walks"""
        noise = load_run_config(REALISTIC_CONFIG).noise
        assert noise.has_d2d
        assert noise.has_c2c
        assert noise.bounded_walks
        assert noise.N_d_max.bounds == (1e27, 4e27)
        assert noise.r_d.c2c_sigma_mult == pytest.approx(0.02)

    def test_dump_round_trips(self):
        """A dumped config loads back unchanged"""
        config = load_run_config(REALISTIC_CONFIG)
        assert RunConfig.model_validate(yaml.safe_load(dump_run_config(config))) == config


class TestLoadRunConfig:
    def test_missing_file(self, tmp_path):
        """Missing configs are parameter-file errors"""
        with pytest.raises(ParameterFileError):
            load_run_config(tmp_path / "absent.yaml")

    def test_unknown_keys_rejected(self, tmp_path):
        """Typos in a config are not silently ignored"""
        path = tmp_path / "typo.yaml"
        path.write_text("nosie: {seed: 1}\n")
        with pytest.raises(ParameterFileError, match="typo.yaml"):
            load_run_config(path)

    def test_empty_file_gives_defaults(self, tmp_path):
        """An empty YAML document is the default run"""
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_run_config(path) == RunConfig()

    def test_with_seed_reaches_noise_and_training(self):
        """One seed drives both the devices and the network"""
        config = RunConfig().with_seed(42)
        assert config.noise.seed == 42
        assert config.train.seed == 42


class TestSelectNoise:
    @pytest.mark.parametrize(
        "selector", [s for s in NoiseSelector if s not in (NoiseSelector.NONE, NoiseSelector.REALISTIC)]
    )
    def test_single_source_selectors(self, selector, window):
        """Every single-source selector turns on noise"""
        noise = select_noise(selector, window, sigma=0.1, seed=5)
        assert noise.seed == 5
        assert noise.has_d2d or noise.has_c2c
        assert not (noise.has_d2d and noise.has_c2c)

    def test_none(self, window):
        """'none' is the ideal device"""
        noise = select_noise("none", window)
        assert not noise.has_d2d
        assert not noise.has_c2c

    def test_realistic_takes_the_seed(self, window):
        """The realistic mix keeps its sigmas but uses the given seed"""
        noise = select_noise(NoiseSelector.REALISTIC, window, seed=9)
        assert noise.seed == 9
        assert noise.l_d.d2d_sigma == pytest.approx(0.05)

    def test_d2d_g_keeps_window_ordered(self, window):
        """G_min samples stay below the midpoint, G_max samples above"""
        noise = select_noise("d2d-g", window, sigma=0.2)
        assert noise.G_min.bounds[1] == pytest.approx(window.G_mid)
        assert noise.G_max.bounds[0] == pytest.approx(window.G_mid)

    def test_invalid_sigma(self, window):
        """Bound walks need sigma < 1"""
        with pytest.raises(InvalidArgumentError):
            select_noise("c2c-nd", window, sigma=1.5)
        with pytest.raises(InvalidArgumentError):
            select_noise("d2d-rd", window, sigma=-0.1)


class TestSettings:
    def test_defaults(self, cli_env, tmp_path, monkeypatch):
        """Without VCMSIM_* variables the shipped parameters and calibrated defaults are used"""
        monkeypatch.delenv("VCMSIM_COEFFS")
        settings = Settings.from_env()
        assert settings.params == DEFAULT_PARAMS
        assert settings.coeffs is None
        assert settings.out == tmp_path / "results"
        assert settings.mnist is None
        assert settings.log_level == "INFO"

    def test_environment_overrides(self, cli_env, monkeypatch):
        """Paths and log level come from the environment"""
        monkeypatch.setenv("VCMSIM_MNIST", "/data/mnist")
        monkeypatch.setenv("VCMSIM_LOG_LEVEL", "debug")
        settings = Settings.from_env()
        assert settings.mnist == Path("/data/mnist")
        assert settings.log_level == "DEBUG"

    def test_resolved_fills_unset_paths(self, cli_env):
        """A config without file paths takes them from the settings"""
        config = RunConfig().resolved(Settings.from_env())
        assert config.params_file == DEFAULT_PARAMS
