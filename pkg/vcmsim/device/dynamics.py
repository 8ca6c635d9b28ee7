"""Vacancy drift in the disc under programming pulses.

dN_d/dt = -I_ion / (Z e A l_d) integrated with explicit Euler substeps whose
length is capped so no device moves more than a fixed share of its window per
substep. The electrical operating point comes from the fitted current model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from vcmsim.device.noise import NoiseSpec, evolve_cycle
from vcmsim.device.params import E_CHARGE, K_B, PhysicalParams
from vcmsim.device.physics import Polarity
from vcmsim.device.pulses import PulseSpec
from vcmsim.device.rng import CounterStreams
from vcmsim.device.state import DeviceState, VoltagePartition
from vcmsim.device.surrogate import (
    DEFAULT_READ_VOLTAGE,
    FitCoefficients,
    read_conductance,
    voltage_partition_from_surrogate,
)
from vcmsim.errors import FieldTooStrongError, InvalidArgumentError, SearchError, StiffnessError

logger = logging.getLogger(__name__)

WINDOW_EXPONENT = 10
STIFFNESS_FRACTION = 1e-9
MATCH_TOLERANCE = 1e-4
MATCH_GAP_TARGET = 0.02  # max pointwise gap of a matched pair, fraction of the G range


@dataclass
class UpdateIntermediates:
    """Per-device quantities behind one evaluation of the drift rate (SI units)."""

    I_M: np.ndarray
    E_ion: np.ndarray
    gamma: np.ndarray
    dW_Af: np.ndarray
    dW_Ar: np.ndarray
    c_VO: np.ndarray
    F_limit: np.ndarray
    T: np.ndarray


@dataclass
class PulseTrace:
    """Substep-resolved record of one device under a pulse."""

    pulse_index: list[int] = field(default_factory=list)
    t: list[float] = field(default_factory=list)
    V_M: list[float] = field(default_factory=list)
    I_M: list[float] = field(default_factory=list)
    N_d: list[float] = field(default_factory=list)
    G: list[float] = field(default_factory=list)
    T: list[float] = field(default_factory=list)

    COLUMNS = ("pulse_index", "t", "V_M", "I_M", "N_d", "G", "T")

    def append(self, **row) -> None:
        for name in self.COLUMNS:
            getattr(self, name).append(row[name])

    def extend(self, other: PulseTrace) -> None:
        for name in self.COLUMNS:
            getattr(self, name).extend(getattr(other, name))

    def rows(self) -> list[tuple]:
        return list(zip(*(getattr(self, name) for name in self.COLUMNS), strict=True))

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class SwitchingCurve:
    """Device response after each pulse of a repeated-pulse experiment."""

    pulse: PulseSpec
    initial_G: float
    pulse_index: np.ndarray
    N_d: np.ndarray
    G: np.ndarray

    def trajectory(self) -> np.ndarray:
        """Conductance including the starting point."""
        return np.concatenate(([self.initial_G], self.G))

    def rows(self) -> list[tuple]:
        return list(zip(self.pulse_index.tolist(), self.N_d.tolist(), self.G.tolist(), strict=True))


def ion_field(partition: VoltagePartition, params: PhysicalParams, state: DeviceState, polarity) -> np.ndarray:
    """Driving field for vacancy hopping.

    SET uses the drop over the disc, V_d / l_d. RESET uses the drop over the
    whole oxide, (V_M - V_s) / l_c, which only involves nominal geometry.
    """
    V_M = np.asarray(partition.V_M, dtype=np.float64)
    if polarity is None:
        return np.zeros_like(V_M)
    if Polarity(polarity) is Polarity.SET:
        return np.asarray(partition.V_d, dtype=np.float64) / state.l_d
    return (V_M - np.asarray(partition.V_s, dtype=np.float64)) / params.l_c


def hopping_barriers(params: PhysicalParams, E_ion):
    """Field-lowered forward/reverse hopping barriers (J) and the field ratio gamma."""
    E_ion = np.asarray(E_ion, dtype=np.float64)
    gamma = E_CHARGE * params.Z_VO * params.alpha_hop * E_ion / (params.dW_A * math.pi)
    if np.any(np.abs(gamma) >= 1):
        raise FieldTooStrongError(
            f"ion field {float(np.max(np.abs(E_ion)))!r} V/m exceeds the hopping barrier (|gamma| >= 1)"
        )
    even = np.sqrt(1.0 - gamma**2) + gamma * np.arcsin(gamma)
    tilt = gamma * math.pi / 2.0
    return params.dW_A * (even - tilt), params.dW_A * (even + tilt), gamma


def limit_window(N_d, N_d_min, N_d_max, polarity) -> np.ndarray:
    """Drift suppression factor; 0 at the boundary the pulse moves towards."""
    N_d = np.asarray(N_d, dtype=np.float64)
    if Polarity(polarity) is Polarity.SET:
        window = 1.0 - (N_d / N_d_max) ** WINDOW_EXPONENT
    else:
        window = 1.0 - (N_d_min / N_d) ** WINDOW_EXPONENT
    return np.clip(window, 0.0, 1.0)


def update_intermediates(
    params: PhysicalParams, state: DeviceState, partition: VoltagePartition, polarity
) -> UpdateIntermediates:
    E_ion = ion_field(partition, params, state, polarity)
    dW_Af, dW_Ar, gamma = hopping_barriers(params, E_ion)
    return UpdateIntermediates(
        I_M=np.asarray(partition.I_M, dtype=np.float64),
        E_ion=E_ion,
        gamma=gamma,
        dW_Af=dW_Af,
        dW_Ar=dW_Ar,
        c_VO=(params.N_p + state.N_d) / 2.0,
        F_limit=limit_window(state.N_d, state.N_d_min, state.N_d_max, polarity),
        T=np.asarray(partition.T, dtype=np.float64),
    )


def ionic_current(params: PhysicalParams, state: DeviceState, inter: UpdateIntermediates) -> np.ndarray:
    area = math.pi * state.r_d**2
    kT = K_B * inter.T
    hopping = np.exp(-inter.dW_Af / kT) - np.exp(-inter.dW_Ar / kT)
    return (
        params.Z_VO * E_CHARGE * area * inter.c_VO * params.alpha_hop * params.nu_0 * inter.F_limit * hopping
    )


def concentration_rate(params: PhysicalParams, state: DeviceState, inter: UpdateIntermediates) -> np.ndarray:
    area = math.pi * state.r_d**2
    return -ionic_current(params, state, inter) / (params.Z_VO * E_CHARGE * area * state.l_d)


def apply_pulse(
    coeffs: FitCoefficients,
    params: PhysicalParams,
    state: DeviceState,
    pulse: PulseSpec,
    noise: NoiseSpec | None = None,
    mask=None,
    record_trace: bool = False,
    pulse_index: int = 0,
    v_read: float = DEFAULT_READ_VOLTAGE,
) -> tuple[DeviceState, PulseTrace | None]:
    """Integrate one pulse on the selected devices and return the new state.

    Devices outside ``mask`` are copied unchanged. When ``noise`` carries
    cycle-to-cycle terms every selected device takes one walk step at the end
    of the pulse. Tracing needs a single-device state.
    """
    new = state.copy()
    polarity = pulse.polarity
    if record_trace and state.size != 1:
        raise InvalidArgumentError("trace recording needs a single-device state")
    trace = PulseTrace() if record_trace else None
    idx = CounterStreams.select(new, mask)
    if polarity is None or idx.size == 0:
        return new, trace

    sub = new.subset(idx)
    N_old = sub.N_d.copy()
    elapsed = np.zeros(idx.size)
    active = np.ones(idx.size, dtype=bool)
    cap = pulse.substep_cap
    min_step = pulse.duration * STIFFNESS_FRACTION
    substeps = 0
    while np.any(active):
        dev = sub.subset(active) if not np.all(active) else sub
        partition = voltage_partition_from_surrogate(coeffs, params, dev, pulse.amplitude)
        inter = update_intermediates(params, dev, partition, polarity)
        rate = concentration_rate(params, dev, inter)
        if trace is not None:
            trace.append(
                pulse_index=pulse_index, t=float(elapsed[0]), V_M=pulse.amplitude,
                I_M=float(inter.I_M[0]), N_d=float(dev.N_d[0]),
                G=float(read_conductance(coeffs, params, dev.N_d[0], v_read)), T=float(inter.T[0]),
            )  # fmt: skip
        remaining = pulse.duration - elapsed[active]
        limit = np.divide(
            pulse.max_dNd_fraction * dev.span,
            np.abs(rate),
            out=np.full(rate.shape, np.inf),
            where=rate != 0,
        )
        dt = np.minimum(np.minimum(cap, remaining), limit)
        stiff = (dt < min_step) & (dt < remaining)
        if np.any(stiff):
            logger.warning("substep underflow on %d devices at V_M=%s", int(stiff.sum()), pulse.amplitude)
            raise StiffnessError(
                f"substep {float(np.min(dt[stiff]))!r} s below {min_step!r} s at V_M={pulse.amplitude!r} V"
            )
        N_next = np.clip(dev.N_d + rate * dt, dev.N_d_min, dev.N_d_max)
        sub.N_d[active] = N_next
        elapsed[active] += dt
        # finished devices, and devices pinned at the boundary they drift towards
        active[active] = (elapsed[active] < pulse.duration * (1.0 - 1e-12)) & (rate != 0)
        substeps += 1
    logger.debug("pulse %s V / %s s took %d substeps", pulse.amplitude, pulse.duration, substeps)

    if trace is not None:
        trace.append(
            pulse_index=pulse_index, t=pulse.duration, V_M=pulse.amplitude,
            I_M=trace.I_M[-1], N_d=float(sub.N_d[0]),
            G=float(read_conductance(coeffs, params, sub.N_d[0], v_read)), T=trace.T[-1],
        )  # fmt: skip

    if noise is not None and noise.has_c2c:
        evolve_cycle(noise, sub, N_old, polarity)
    new.assign(idx, sub)
    return new, trace


def switching_curve(
    coeffs: FitCoefficients,
    params: PhysicalParams,
    state: DeviceState,
    pulse: PulseSpec,
    n_pulses: int,
    v_read: float = DEFAULT_READ_VOLTAGE,
    noise: NoiseSpec | None = None,
) -> SwitchingCurve:
    """Conductance of a single device after each of ``n_pulses`` identical pulses."""
    if n_pulses < 1:
        raise InvalidArgumentError("n_pulses must be >= 1")
    if state.size != 1:
        raise InvalidArgumentError("switching curves are traced on a single-device state")
    current = state.copy()
    N_d = np.empty(n_pulses)
    for k in range(n_pulses):
        current, _ = apply_pulse(coeffs, params, current, pulse, noise, v_read=v_read)
        N_d[k] = current.N_d[0]
    return SwitchingCurve(
        pulse=pulse,
        initial_G=float(read_conductance(coeffs, params, state.N_d[0], v_read)),
        pulse_index=np.arange(1, n_pulses + 1),
        N_d=N_d,
        G=np.asarray(read_conductance(coeffs, params, N_d, v_read), dtype=np.float64),
    )


def trajectory_mismatch(rising, falling, G_min: float, G_max: float) -> float:
    """RMS gap between a rising trajectory and a falling one read backwards.

    Both are clipped to [G_min, G_max] and the result is a fraction of that range.
    """
    rising = np.clip(np.asarray(rising, dtype=np.float64), G_min, G_max)
    falling = np.clip(np.asarray(falling, dtype=np.float64)[::-1], G_min, G_max)
    if rising.shape != falling.shape:
        raise InvalidArgumentError("trajectories must have the same length")
    return float(np.sqrt(np.mean((rising - falling) ** 2)) / (G_max - G_min))


def trajectory_gap(rising, falling, G_min: float, G_max: float) -> float:
    """Largest pointwise gap, as a fraction of the range, between mirrored trajectories."""
    rising = np.clip(np.asarray(rising, dtype=np.float64), G_min, G_max)
    falling = np.clip(np.asarray(falling, dtype=np.float64)[::-1], G_min, G_max)
    return float(np.max(np.abs(rising - falling)) / (G_max - G_min))


def match_set_reset(
    coeffs: FitCoefficients,
    params: PhysicalParams,
    set_pulse: PulseSpec,
    reset_search_range: tuple[float, float],
    low_state: DeviceState,
    high_state: DeviceState,
    G_min: float,
    G_max: float,
    n_pulses: int,
    v_read: float = DEFAULT_READ_VOLTAGE,
) -> tuple[PulseSpec, float]:
    """RESET amplitude (same duration as SET) whose curve best mirrors the SET curve.

    The SET curve starts from ``low_state``, RESET curves from ``high_state``.
    Bounded Brent search over the amplitude range, with both endpoints scored too.
    """
    lo, hi = sorted(float(v) for v in reset_search_range)
    if lo <= 0:
        raise SearchError(f"RESET search range {reset_search_range!r} must be strictly positive")
    if set_pulse.polarity is not Polarity.SET:
        raise SearchError("set_pulse must have a negative amplitude")
    rising = switching_curve(coeffs, params, low_state, set_pulse, n_pulses, v_read).trajectory()

    def reset_pulse(amplitude: float) -> PulseSpec:
        return set_pulse.model_copy(update={"amplitude": float(amplitude)})

    def score(amplitude: float) -> float:
        falling = switching_curve(coeffs, params, high_state, reset_pulse(amplitude), n_pulses, v_read)
        return trajectory_mismatch(rising, falling.trajectory(), G_min, G_max)

    candidates = {lo: score(lo), hi: score(hi)}
    if lo < hi:
        result = minimize_scalar(score, bounds=(lo, hi), method="bounded", options={"xatol": MATCH_TOLERANCE})
        candidates[float(result.x)] = float(result.fun)
    finite = {a: s for a, s in candidates.items() if math.isfinite(s)}
    if not finite:
        raise SearchError(f"no finite mismatch inside {reset_search_range!r}")
    best = min(finite, key=finite.get)
    logger.info("matched RESET amplitude %.4f V (mismatch %.4g)", best, finite[best])
    return reset_pulse(best), finite[best]
