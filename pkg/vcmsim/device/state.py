from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from vcmsim.errors import ConsistencyError

FloatArray = np.ndarray

NOISY_FIELDS = ("r_d", "l_d", "N_d_min", "N_d_max", "G_min", "G_max")


@dataclass
class DeviceState:
    """Mutable state of a batch of devices, one array entry per device.

    ``N_d`` is the disc vacancy concentration; the remaining float fields are
    this device's noisy realisations. ``stream_id``/``stream_pos`` locate the
    device's private counter-based random stream.
    """

    N_d: FloatArray
    r_d: FloatArray
    l_d: FloatArray
    N_d_min: FloatArray
    N_d_max: FloatArray
    G_min: FloatArray
    G_max: FloatArray
    stream_id: np.ndarray
    stream_pos: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            value = np.atleast_1d(np.asarray(getattr(self, f.name)))
            if f.name in ("stream_id", "stream_pos"):
                value = value.astype(np.uint64)
            else:
                value = value.astype(np.float64)
            setattr(self, f.name, value)
        n = self.N_d.shape[0]
        for f in fields(self):
            if getattr(self, f.name).shape != (n,):
                raise ConsistencyError(f"DeviceState.{f.name} must have shape ({n},)")

    @property
    def size(self) -> int:
        return int(self.N_d.shape[0])

    @property
    def span(self) -> FloatArray:
        return self.N_d_max - self.N_d_min

    def copy(self) -> DeviceState:
        return DeviceState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def subset(self, index) -> DeviceState:
        return DeviceState(**{f.name: getattr(self, f.name)[index].copy() for f in fields(self)})

    def assign(self, index, other: DeviceState) -> None:
        for f in fields(self):
            getattr(self, f.name)[index] = getattr(other, f.name)

    def validate(self) -> None:
        """Raise ConsistencyError if any device breaks its invariants."""
        for name in NOISY_FIELDS:
            if np.any(~(getattr(self, name) > 0)):
                raise ConsistencyError(f"{name} must be strictly positive on every device")
        if np.any(self.N_d_min >= self.N_d_max):
            raise ConsistencyError("N_d_min must be < N_d_max on every device")
        if np.any(self.G_min >= self.G_max):
            raise ConsistencyError("G_min must be < G_max on every device")
        outside = (self.N_d < self.N_d_min) | (self.N_d > self.N_d_max)
        if np.any(outside):
            raise ConsistencyError(
                f"N_d outside its bounds on devices {np.flatnonzero(outside)[:10].tolist()}"
            )

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_arrays(cls, data: dict[str, np.ndarray]) -> DeviceState:
        return cls(**{f.name: np.asarray(data[f.name]) for f in fields(cls)})


@dataclass
class VoltagePartition:
    """Voltage drops across the stack for one bias point (floats or arrays)."""

    V_M: FloatArray
    V_s: FloatArray
    V_p: FloatArray
    V_d: FloatArray
    V_Sch: FloatArray
    I_M: FloatArray
    T: FloatArray

    @property
    def closure_residual(self) -> FloatArray:
        return np.abs(self.V_M - (self.V_s + self.V_p + self.V_d + self.V_Sch))
