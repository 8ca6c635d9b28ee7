"""Run configuration: YAML files validated by pydantic, defaults from the environment."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import yaml
from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from vcmsim.device.noise import NoiseSpec
from vcmsim.device.pulses import ConductanceWindow, PulseScheme, PulseSpec
from vcmsim.errors import InvalidArgumentError, ParameterFileError
from vcmsim.training.trainer import TrainConfig

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DEFAULT_PARAMS = DATA_DIR / "params" / "jart_vcm_v1b.params"
DEFAULT_COEFFS_DIR = DATA_DIR / "coeffs"
REALISTIC_CONFIG = DATA_DIR / "configs" / "realistic.yaml"
DEFAULT_SIGMA = 0.3


@dataclass(frozen=True)
class Settings:
    """File locations and log level, from VCMSIM_* variables (a .env file is honoured).

    ``coeffs`` unset means the calibrated default set for the parameter file.
    """

    params: Path
    coeffs: Path | None
    out: Path
    mnist: Path | None
    log_level: str

    @classmethod
    def from_env(cls) -> Settings:
        load_dotenv(find_dotenv(usecwd=True))
        mnist = os.getenv("VCMSIM_MNIST")
        coeffs = os.getenv("VCMSIM_COEFFS")
        return cls(
            params=Path(os.getenv("VCMSIM_PARAMS", str(DEFAULT_PARAMS))),
            coeffs=Path(coeffs) if coeffs else None,
            out=Path(os.getenv("VCMSIM_OUT", "results")),
            mnist=Path(mnist) if mnist else None,
            log_level=os.getenv("VCMSIM_LOG_LEVEL", "INFO").upper(),
        )


def default_pulses() -> PulseScheme:
    return PulseScheme(
        set=PulseSpec(amplitude=-0.75, duration=1e-7),
        reset=PulseSpec(amplitude=1.15, duration=1e-7),
    )


class RunConfig(BaseModel):
    """One experiment. File paths left unset fall back to the environment settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    params_file: Path | None = None
    coeffs_file: Path | None = None
    mnist_dir: Path | None = None
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    pulses: PulseScheme = Field(default_factory=default_pulses)
    window: ConductanceWindow = Field(default_factory=lambda: ConductanceWindow(G_min=2.4e-5, G_max=7.9e-5))
    train: TrainConfig = Field(default_factory=TrainConfig)

    def resolved(self, settings: Settings) -> RunConfig:
        return self.model_copy(
            update={
                "params_file": self.params_file or settings.params,
                "coeffs_file": self.coeffs_file or settings.coeffs,
                "mnist_dir": self.mnist_dir or settings.mnist,
            }
        )

    def with_seed(self, seed: int) -> RunConfig:
        return self.model_copy(
            update={
                "noise": self.noise.model_copy(update={"seed": seed}),
                "train": self.train.model_copy(update={"seed": seed}),
            }
        )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError as e:
        raise ParameterFileError("config file not found", str(path)) from e
    except yaml.YAMLError as e:
        raise ParameterFileError(f"invalid YAML: {e}", str(path)) from e
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ParameterFileError(f"invalid run configuration: {e}", str(path)) from e
    logger.debug("loaded run configuration from %s", path)
    return config


def dump_run_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


class NoiseSelector(str, Enum):
    NONE = "none"
    REALISTIC = "realistic"
    D2D_NDMAX = "d2d-ndmax"
    D2D_NDMIN = "d2d-ndmin"
    D2D_ND = "d2d-nd"
    D2D_RD = "d2d-rd"
    D2D_LD = "d2d-ld"
    D2D_G = "d2d-g"
    C2C_ND = "c2c-nd"
    C2C_RD = "c2c-rd"
    C2C_LD = "c2c-ld"
    C2C_RD_MULT = "c2c-rd-mult"
    C2C_LD_MULT = "c2c-ld-mult"


# selector -> [(parameter, field)] switched on at the requested sigma
_SINGLE_SOURCES = {
    NoiseSelector.D2D_NDMAX: [("N_d_max", "d2d_sigma")],
    NoiseSelector.D2D_NDMIN: [("N_d_min", "d2d_sigma")],
    NoiseSelector.D2D_ND: [("N_d_max", "d2d_sigma"), ("N_d_min", "d2d_sigma")],
    NoiseSelector.D2D_RD: [("r_d", "d2d_sigma")],
    NoiseSelector.D2D_LD: [("l_d", "d2d_sigma")],
    NoiseSelector.C2C_ND: [("N_d_max", "c2c_sigma"), ("N_d_min", "c2c_sigma")],
    NoiseSelector.C2C_RD: [("r_d", "c2c_sigma_add")],
    NoiseSelector.C2C_LD: [("l_d", "c2c_sigma_add")],
    NoiseSelector.C2C_RD_MULT: [("r_d", "c2c_sigma_mult")],
    NoiseSelector.C2C_LD_MULT: [("l_d", "c2c_sigma_mult")],
}


def select_noise(
    selector: NoiseSelector | str, window: ConductanceWindow, sigma: float = DEFAULT_SIGMA, seed: int = 0
) -> NoiseSpec:
    """NoiseSpec with exactly one noise source switched on (or none, or the realistic mix)."""
    selector = NoiseSelector(selector)
    if sigma < 0:
        raise InvalidArgumentError("sigma must be >= 0")
    if selector is NoiseSelector.NONE:
        return NoiseSpec(seed=seed)
    if selector is NoiseSelector.REALISTIC:
        return load_run_config(REALISTIC_CONFIG).noise.model_copy(update={"seed": seed})
    noise = NoiseSpec(seed=seed)
    if selector is NoiseSelector.D2D_G:
        # keep each device's window ordered: G_min stays below the nominal midpoint, G_max above
        noise = noise.with_parameter("G_min", d2d_sigma=sigma, bounds=(0.0, window.G_mid))
        return noise.with_parameter("G_max", d2d_sigma=sigma, bounds=(window.G_mid, 2.0 * window.G_max))
    try:
        for name, field_name in _SINGLE_SOURCES[selector]:
            noise = noise.with_parameter(name, **{field_name: sigma})
    except ValidationError as e:
        raise InvalidArgumentError(f"sigma {sigma!r} is not valid for {selector.value}: {e}") from e
    return noise
