"""Device-to-device and cycle-to-cycle parameter variation."""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from vcmsim.device.params import PhysicalParams
from vcmsim.device.physics import Polarity
from vcmsim.device.pulses import ConductanceWindow
from vcmsim.device.rng import CounterStreams
from vcmsim.device.state import NOISY_FIELDS, DeviceState
from vcmsim.device.surrogate import FitCoefficients, concentration_for_conductance, read_conductance
from vcmsim.errors import InvalidArgumentError, SamplingError

logger = logging.getLogger(__name__)

BOUND_WALK_FIELDS = ("N_d_max", "N_d_min")
GEOMETRY_WALK_FIELDS = ("r_d", "l_d")
UNSATISFIABLE_SIGMAS = 6.0
MAX_REJECTION_ROUNDS = 1000


class ParameterNoise(BaseModel):
    """Variation of one noisy parameter. Sigmas are relative to the mean."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d2d_sigma: float = Field(default=0.0, ge=0)
    c2c_sigma: float = Field(default=0.0, ge=0, lt=1)
    c2c_sigma_add: float = Field(default=0.0, ge=0)
    c2c_sigma_mult: float = Field(default=0.0, ge=0)
    bounds: tuple[float, float] | None = None
    d2d_enabled: bool = True
    c2c_enabled: bool = True

    @field_validator("bounds")
    @classmethod
    def _check_bounds(cls, value):
        if value is not None and not value[0] < value[1]:
            raise ValueError("bounds must satisfy lo < hi")
        return value

    @model_validator(mode="after")
    def _check_geometry_walk(self) -> ParameterNoise:
        # keeps 1 + Ω1 σ_add + Ω2 σ_mult u strictly positive
        if self.c2c_sigma_add + self.c2c_sigma_mult >= 1:
            raise ValueError("c2c_sigma_add + c2c_sigma_mult must be < 1")
        return self

    @property
    def d2d(self) -> float:
        return self.d2d_sigma if self.d2d_enabled else 0.0

    @property
    def c2c(self) -> float:
        return self.c2c_sigma if self.c2c_enabled else 0.0

    @property
    def c2c_add(self) -> float:
        return self.c2c_sigma_add if self.c2c_enabled else 0.0

    @property
    def c2c_mult(self) -> float:
        return self.c2c_sigma_mult if self.c2c_enabled else 0.0


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    N_d_max: ParameterNoise = Field(default_factory=ParameterNoise)
    N_d_min: ParameterNoise = Field(default_factory=ParameterNoise)
    r_d: ParameterNoise = Field(default_factory=ParameterNoise)
    l_d: ParameterNoise = Field(default_factory=ParameterNoise)
    G_max: ParameterNoise = Field(default_factory=ParameterNoise)
    G_min: ParameterNoise = Field(default_factory=ParameterNoise)
    seed: int = Field(default=0, ge=0)
    bounded_walks: bool = True

    @model_validator(mode="after")
    def _check_walk_targets(self) -> NoiseSpec:
        for name in NOISY_FIELDS:
            spec = self.parameter(name)
            if name not in BOUND_WALK_FIELDS and spec.c2c_sigma:
                raise ValueError(f"{name}: c2c_sigma only applies to N_d_max and N_d_min")
            if name not in GEOMETRY_WALK_FIELDS and (spec.c2c_sigma_add or spec.c2c_sigma_mult):
                raise ValueError(f"{name}: c2c_sigma_add/mult only apply to r_d and l_d")
        return self

    def parameter(self, name: str) -> ParameterNoise:
        if name not in NOISY_FIELDS:
            raise InvalidArgumentError(f"{name} is not a noisy parameter")
        return getattr(self, name)

    @property
    def has_d2d(self) -> bool:
        return any(self.parameter(n).d2d > 0 for n in NOISY_FIELDS)

    @property
    def has_c2c(self) -> bool:
        return any(
            self.parameter(n).c2c > 0 or self.parameter(n).c2c_add > 0 or self.parameter(n).c2c_mult > 0
            for n in NOISY_FIELDS
        )

    def with_parameter(self, name: str, **changes) -> NoiseSpec:
        updated = self.parameter(name).model_copy(update=changes)
        return NoiseSpec.model_validate({**self.model_dump(), name: updated.model_dump()})

    def provenance(self) -> dict:
        return self.model_dump(mode="json")


def sample_d2d(nominal: float, sigma: float, bounds, streams: CounterStreams, state: DeviceState, mask=None):
    """Truncated Normal(nominal, nominal*sigma) draw for each selected device.

    Out-of-bounds and non-positive draws are rejected and redrawn from the same
    device stream. ``sigma == 0`` returns the nominal without consuming draws.
    """
    if not sigma >= 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma!r}")
    idx = streams.select(state, mask)
    lo, hi = (-np.inf, np.inf) if bounds is None else (float(bounds[0]), float(bounds[1]))
    nominal = float(nominal)
    if sigma == 0:
        if not lo <= nominal <= hi:
            raise SamplingError(f"nominal {nominal!r} lies outside the truncation bounds {bounds!r}")
        return np.full(idx.shape[0], nominal)
    std = abs(nominal) * sigma
    if lo > nominal + UNSATISFIABLE_SIGMAS * std or hi < nominal - UNSATISFIABLE_SIGMAS * std:
        raise SamplingError(
            f"bounds {bounds!r} exclude the mean {nominal!r} by more than "
            f"{UNSATISFIABLE_SIGMAS:g} standard deviations"
        )
    out = np.empty(idx.shape[0])
    pending = np.arange(idx.shape[0])
    for _ in range(MAX_REJECTION_ROUNDS):
        if pending.size == 0:
            return out
        draws = nominal + std * streams.normal(state, idx[pending])
        ok = (draws >= lo) & (draws <= hi) & (draws > 0)
        out[pending[ok]] = draws[ok]
        pending = pending[~ok]
    if pending.size == 0:
        return out
    raise SamplingError(f"rejection sampling for {pending.size} devices did not terminate")


def c2c_walk_bounds(X, sigma: float, bounds, streams: CounterStreams, state: DeviceState, mask=None, clamp=True):
    """One random-walk step X + Ω X sigma, Ω ~ U(-1, 1)."""
    X = np.asarray(X, dtype=np.float64)
    if sigma == 0:
        return X.copy()
    omega = streams.symmetric(state, mask)
    new = X + omega * X * sigma
    if clamp and bounds is not None:
        new = np.clip(new, bounds[0], bounds[1])
    return new


def update_fraction(N_old, N_new, N_min, N_max, polarity: Polarity):
    """Share of the remaining window an update used; 0 where no update was possible."""
    polarity = Polarity(polarity)
    N_old = np.asarray(N_old, dtype=np.float64)
    N_new = np.asarray(N_new, dtype=np.float64)
    if polarity is Polarity.SET:
        moved, room = N_new - N_old, np.asarray(N_max) - N_old
    else:
        moved, room = N_old - N_new, N_old - np.asarray(N_min)
    u = np.divide(moved, room, out=np.zeros(np.broadcast(moved, room).shape), where=room > 0)
    return np.clip(u, 0.0, 1.0)


def c2c_walk_geometry(
    X,
    sigma_add: float,
    sigma_mult: float,
    N_old,
    N_new,
    N_min,
    N_max,
    polarity: Polarity,
    bounds,
    streams: CounterStreams,
    state: DeviceState,
    mask=None,
    clamp=True,
):
    """X (1 + Ω1 sigma_add + Ω2 sigma_mult u) with u the update fraction."""
    X = np.asarray(X, dtype=np.float64)
    if sigma_add == 0 and sigma_mult == 0:
        return X.copy()
    u = update_fraction(N_old, N_new, N_min, N_max, polarity)
    omega1 = streams.symmetric(state, mask)
    omega2 = streams.symmetric(state, mask)
    new = X * (1.0 + omega1 * sigma_add + omega2 * sigma_mult * u)
    if clamp and bounds is not None:
        new = np.clip(new, bounds[0], bounds[1])
    return new


def evolve_cycle(noise: NoiseSpec, state: DeviceState, N_old, polarity: Polarity, mask=None) -> None:
    """Advance every cycle-to-cycle walk one step for the selected devices, in place.

    Walks run in the order N_d_max, N_d_min, r_d, l_d. A bound walk that would
    cross the concentration window keeps the previous bounds, and N_d is
    clamped back into the window afterwards.
    """
    streams = CounterStreams(noise.seed)
    idx = streams.select(state, mask)
    if idx.size == 0 or not noise.has_c2c:
        return
    clamp = noise.bounded_walks
    N_new = state.N_d[idx]
    N_min_old = state.N_d_min[idx].copy()
    N_max_old = state.N_d_max[idx].copy()

    for name in BOUND_WALK_FIELDS:
        spec = noise.parameter(name)
        values = getattr(state, name)
        values[idx] = c2c_walk_bounds(values[idx], spec.c2c, spec.bounds, streams, state, idx, clamp)
    crossed = state.N_d_min[idx] >= state.N_d_max[idx]
    if np.any(crossed):
        logger.debug("concentration window crossed on %d devices; keeping old bounds", int(crossed.sum()))
        state.N_d_min[idx[crossed]] = N_min_old[crossed]
        state.N_d_max[idx[crossed]] = N_max_old[crossed]

    for name in GEOMETRY_WALK_FIELDS:
        spec = noise.parameter(name)
        values = getattr(state, name)
        values[idx] = c2c_walk_geometry(
            values[idx], spec.c2c_add, spec.c2c_mult, N_old, N_new, N_min_old, N_max_old,
            polarity, spec.bounds, streams, state, idx, clamp,
        )  # fmt: skip

    state.N_d[idx] = np.clip(N_new, state.N_d_min[idx], state.N_d_max[idx])


def nominal_values(params: PhysicalParams, window: ConductanceWindow) -> dict[str, float]:
    return {
        "r_d": params.r_d,
        "l_d": params.l_d,
        "N_d_min": params.N_d_min,
        "N_d_max": params.N_d_max,
        "G_min": window.G_min,
        "G_max": window.G_max,
    }


def realize_devices(
    params: PhysicalParams,
    coeffs: FitCoefficients,
    noise: NoiseSpec,
    window: ConductanceWindow,
    device_ids,
    seed: int | None = None,
    initial_conductance: float | None = None,
) -> DeviceState:
    """Fabricate devices: d2d draws per parameter, then the starting N_d.

    Each device draws from its own stream keyed by (seed, device id), so a
    device is identical whichever batch it is created in. Without
    ``initial_conductance`` the start is uniform in conductance over the
    reachable part of the device's control window.
    """
    ids = np.atleast_1d(np.asarray(device_ids, dtype=np.uint64))
    n = ids.shape[0]
    nominal = nominal_values(params, window)
    state = DeviceState(
        N_d=np.full(n, params.N_d_min),
        **{name: np.full(n, value) for name, value in nominal.items()},
        stream_id=ids,
        stream_pos=np.zeros(n, dtype=np.uint64),
    )
    streams = CounterStreams(noise.seed if seed is None else seed)
    for name in NOISY_FIELDS:
        spec = noise.parameter(name)
        if spec.d2d > 0:
            setattr(state, name, sample_d2d(nominal[name], spec.d2d, spec.bounds, streams, state))

    if np.any(state.N_d_min >= state.N_d_max) or np.any(state.G_min >= state.G_max):
        raise SamplingError("device-to-device draws produced an empty window; tighten the truncation bounds")

    v_read = window.read_voltage
    g_lo = np.maximum(state.G_min, read_conductance(coeffs, params, state.N_d_min, v_read))
    g_hi = np.minimum(state.G_max, read_conductance(coeffs, params, state.N_d_max, v_read))
    if np.any(g_lo > g_hi):
        bad = np.flatnonzero(g_lo > g_hi)
        raise SamplingError(f"control window unreachable on devices {ids[bad][:10].tolist()}")
    if initial_conductance is None:
        target = g_lo + streams.uniform(state) * (g_hi - g_lo)
    else:
        target = np.clip(np.full(n, float(initial_conductance)), g_lo, g_hi)
    state.N_d = concentration_for_conductance(
        coeffs, params, target, lo=state.N_d_min, hi=state.N_d_max, v_read=v_read
    )
    state.validate()
    return state


def realize_device(
    params: PhysicalParams,
    coeffs: FitCoefficients,
    noise: NoiseSpec,
    window: ConductanceWindow,
    device_index: int,
    seed: int | None = None,
    initial_conductance: float | None = None,
) -> DeviceState:
    return realize_devices(params, coeffs, noise, window, [device_index], seed, initial_conductance)
