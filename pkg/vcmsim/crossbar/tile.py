"""Crossbar tile: one VCM device per weight, read and programmed in place."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from vcmsim.device.dynamics import apply_pulse
from vcmsim.device.noise import NoiseSpec, evolve_cycle, realize_devices
from vcmsim.device.params import PhysicalParams
from vcmsim.device.physics import Polarity
from vcmsim.device.pulses import ConductanceWindow, PulseScheme, PulseSpec
from vcmsim.device.rng import CounterStreams
from vcmsim.device.state import DeviceState
from vcmsim.device.surrogate import FitCoefficients, concentration_for_conductance, read_conductance
from vcmsim.errors import DimensionError, InvalidArgumentError

logger = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-9


@dataclass(frozen=True)
class WeightMapping:
    """Linear map between the nominal conductance window and [-w_max, w_max]."""

    G_min: float
    G_max: float
    w_max: float

    def __post_init__(self):
        if not 0 < self.G_min < self.G_max:
            raise InvalidArgumentError("mapping needs 0 < G_min < G_max")
        if not self.w_max > 0:
            raise InvalidArgumentError("w_max must be > 0")

    @property
    def slope(self) -> float:
        """Weight per siemens."""
        return 2.0 * self.w_max / (self.G_max - self.G_min)

    def to_weight(self, G):
        return (np.asarray(G, dtype=np.float64) - self.G_min) * self.slope - self.w_max

    def to_conductance(self, w):
        return (np.asarray(w, dtype=np.float64) + self.w_max) / self.slope + self.G_min


@dataclass(frozen=True)
class BoundsViolation:
    row: int
    col: int
    G: float
    G_min: float
    G_max: float


@dataclass
class UpdateReport:
    requested: int = 0
    applied: int = 0
    skipped: int = 0

    def merge(self, other: UpdateReport) -> None:
        self.requested += other.requested
        self.applied += other.applied
        self.skipped += other.skipped


def calibrate_pulse_step(
    coeffs: FitCoefficients,
    params: PhysicalParams,
    window: ConductanceWindow,
    pulses: PulseScheme,
    mapping: WeightMapping,
) -> float:
    """Weight change of one pulse on a nominal device sitting mid-window.

    Mean of the SET and RESET conductance steps, converted through the mapping.
    """
    noise_free = NoiseSpec()
    device = realize_devices(params, coeffs, noise_free, window, [0], initial_conductance=window.G_mid)
    G0 = float(read_conductance(coeffs, params, device.N_d[0], window.read_voltage))
    steps = []
    for pulse in (pulses.set, pulses.reset):
        after, _ = apply_pulse(coeffs, params, device, pulse, v_read=window.read_voltage)
        steps.append(abs(float(read_conductance(coeffs, params, after.N_d[0], window.read_voltage)) - G0))
    mean_step = float(np.mean(steps))
    if mean_step == 0:
        raise InvalidArgumentError("pulse scheme does not move a mid-window device")
    logger.info("pulse step: SET %.4g S, RESET %.4g S", steps[0], steps[1])
    return mean_step * mapping.slope


class CrossbarTile:
    """rows x cols devices stored row-major in a single DeviceState batch.

    Device stream ids run from ``first_device_id``, so several tiles sharing a
    master seed draw from disjoint streams.
    """

    def __init__(
        self,
        rows: int,
        cols: int,
        params: PhysicalParams,
        coeffs: FitCoefficients,
        noise: NoiseSpec,
        window: ConductanceWindow,
        pulses: PulseScheme,
        w_max: float,
        first_device_id: int = 0,
        devices: DeviceState | None = None,
        dw_per_pulse: float | None = None,
    ):
        if rows < 1 or cols < 1:
            raise InvalidArgumentError("tile needs at least one row and one column")
        self.rows = rows
        self.cols = cols
        self.params = params
        self.coeffs = coeffs
        self.noise = noise
        self.window = window
        self.pulses = pulses
        self.mapping = WeightMapping(window.G_min, window.G_max, w_max)
        self.first_device_id = first_device_id
        if devices is None:
            ids = first_device_id + np.arange(rows * cols, dtype=np.uint64)
            devices = realize_devices(params, coeffs, noise, window, ids)
        elif devices.size != rows * cols:
            raise DimensionError(f"{devices.size} devices for a {rows}x{cols} tile")
        self.devices = devices
        self.dw_per_pulse = (
            calibrate_pulse_step(coeffs, params, window, pulses, self.mapping)
            if dw_per_pulse is None
            else float(dw_per_pulse)
        )
        self._streams = CounterStreams(noise.seed)
        self.totals = UpdateReport()

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def _read(self, N_d):
        return np.asarray(
            read_conductance(self.coeffs, self.params, N_d, self.window.read_voltage), dtype=np.float64
        )

    def read_conductances(self) -> np.ndarray:
        return self._read(self.devices.N_d).reshape(self.shape)

    def read_weights(self) -> np.ndarray:
        return self.mapping.to_weight(self.read_conductances())

    def forward(self, x) -> np.ndarray:
        """W x for a vector or a (batch, cols) matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.cols:
            raise DimensionError(f"input length {x.shape[-1]} != tile cols {self.cols}")
        return x @ self.read_weights().T

    def backward(self, d) -> np.ndarray:
        """W^T d for a vector or a (batch, rows) matrix."""
        d = np.asarray(d, dtype=np.float64)
        if d.shape[-1] != self.rows:
            raise DimensionError(f"error length {d.shape[-1]} != tile rows {self.rows}")
        return d @ self.read_weights()

    def pulse_counts(self, delta_w) -> np.ndarray:
        """Stochastically rounded pulse counts for a flat array of weight changes.

        Only devices with a non-zero request draw from their stream.
        """
        delta_w = np.asarray(delta_w, dtype=np.float64).ravel()
        expected = np.abs(delta_w) / self.dw_per_pulse
        counts = np.floor(expected).astype(np.int64)
        wanted = np.flatnonzero(delta_w != 0)
        if wanted.size:
            u = self._streams.uniform(self.devices, wanted)
            counts[wanted] += (u < expected[wanted] - counts[wanted]).astype(np.int64)
        return counts

    def pulsed_update(self, delta_w) -> UpdateReport:
        """Move the weights by ``delta_w`` with SET (positive) and RESET (negative) pulses."""
        delta_w = np.asarray(delta_w, dtype=np.float64)
        if delta_w.shape != self.shape:
            raise DimensionError(f"update shape {delta_w.shape} != tile shape {self.shape}")
        flat = delta_w.ravel()
        counts = self.pulse_counts(flat)
        report = UpdateReport(requested=int(counts.sum()))
        for pulse, sign in ((self.pulses.set, 1.0), (self.pulses.reset, -1.0)):
            group = (np.sign(flat) == sign) & (counts > 0)
            for k in range(int(counts[group].max(initial=0))):
                idx = np.flatnonzero(group & (counts > k))
                report.merge(self._pulse_round(idx, pulse))
        self.totals.merge(report)
        if report.skipped:
            logger.debug("skipped %d of %d pulses", report.skipped, report.requested)
        return report

    def apply_update(self, delta_w) -> UpdateReport:
        return self.pulsed_update(delta_w)

    def _pulse_round(self, idx: np.ndarray, pulse: PulseSpec) -> UpdateReport:
        """One pulse on each device in ``idx``, gated by the control circuit."""
        polarity = pulse.polarity
        devices = self.devices
        G = self._read(devices.N_d[idx])
        if polarity is Polarity.SET:
            at_bound = G >= devices.G_max[idx]
        else:
            at_bound = G <= devices.G_min[idx]
        candidates = idx[~at_bound]
        if candidates.size == 0:
            return UpdateReport(skipped=int(idx.size))

        trial, _ = apply_pulse(
            self.coeffs, self.params, devices.subset(candidates), pulse, v_read=self.window.read_voltage
        )
        G_trial = self._read(trial.N_d)
        if polarity is Polarity.SET:
            overshoot = G_trial > devices.G_max[candidates]
        else:
            overshoot = G_trial < devices.G_min[candidates]
        accepted = candidates[~overshoot]
        N_old = devices.N_d[accepted].copy()
        devices.N_d[accepted] = trial.N_d[~overshoot]
        if self.noise.has_c2c and accepted.size:
            evolve_cycle(self.noise, devices, N_old, polarity, accepted)
            self._restore_window(accepted)
        return UpdateReport(applied=int(accepted.size), skipped=int(idx.size - accepted.size))

    def _restore_window(self, idx: np.ndarray) -> None:
        """Put devices whose read left [G_min, G_max] after a walk back onto the bound."""
        devices = self.devices
        G = self._read(devices.N_d[idx])
        outside = (G < devices.G_min[idx]) | (G > devices.G_max[idx])
        if not np.any(outside):
            return
        moved = idx[outside]
        target = np.clip(G[outside], devices.G_min[moved], devices.G_max[moved])
        devices.N_d[moved] = concentration_for_conductance(
            self.coeffs,
            self.params,
            target,
            lo=devices.N_d_min[moved],
            hi=devices.N_d_max[moved],
            v_read=self.window.read_voltage,
        )

    def enforce_conductance_bounds(self, tolerance: float = BOUND_TOLERANCE) -> list[BoundsViolation]:
        """Devices whose read conductance lies outside their own control window."""
        G = self._read(self.devices.N_d)
        G_min, G_max = self.devices.G_min, self.devices.G_max
        bad = np.flatnonzero((G < G_min * (1.0 - tolerance)) | (G > G_max * (1.0 + tolerance)))
        violations = [
            BoundsViolation(int(k // self.cols), int(k % self.cols), float(G[k]), float(G_min[k]), float(G_max[k]))
            for k in bad
        ]
        if violations:
            logger.warning("%d devices outside their conductance window", len(violations))
        return violations
