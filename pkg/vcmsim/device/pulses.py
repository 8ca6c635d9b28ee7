from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator

from vcmsim.device.physics import Polarity


class PulseSpec(BaseModel):
    """One rectangular programming pulse. Negative amplitude is SET."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: float
    duration: float = Field(gt=0)
    max_substep: float | None = Field(default=None, gt=0)
    max_dNd_fraction: float = Field(default=0.01, gt=0, le=1)

    @property
    def substep_cap(self) -> float:
        return self.duration if self.max_substep is None else self.max_substep

    @property
    def polarity(self) -> Polarity | None:
        return None if self.amplitude == 0 else Polarity.from_voltage(self.amplitude)

    def split(self, parts: int) -> PulseSpec:
        """Same pulse shape with 1/parts of the duration."""
        return self.model_copy(update={"duration": self.duration / parts})


class PulseScheme(BaseModel):
    """Matched SET/RESET pulse pair used for pulsed weight updates."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    set: PulseSpec
    reset: PulseSpec

    @model_validator(mode="after")
    def _check_polarities(self) -> PulseScheme:
        if self.set.amplitude >= 0:
            raise ValueError("SET pulse amplitude must be negative")
        if self.reset.amplitude <= 0:
            raise ValueError("RESET pulse amplitude must be positive")
        return self


class ConductanceWindow(BaseModel):
    """Conductance range kept by the control circuit, and the read scheme."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    G_min: float = Field(gt=0)
    G_max: float = Field(gt=0)
    read_voltage: float = -0.2

    @model_validator(mode="after")
    def _check_window(self) -> ConductanceWindow:
        if self.G_min >= self.G_max:
            raise ValueError("G_min must be < G_max")
        if self.read_voltage == 0:
            raise ValueError("read_voltage must be non-zero")
        return self

    @property
    def G_mid(self) -> float:
        return 0.5 * (self.G_min + self.G_max)
