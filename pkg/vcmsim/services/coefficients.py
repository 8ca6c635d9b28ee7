"""Fitted coefficient sets and their calibration reports.

The default set for a parameter file lives at ``<directory>/<params stem>.coeffs``
with ``<params stem>.report.json`` beside it. It is produced by ``calibrate``
and refitted whenever the report names another parameter-file checksum.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from vcmsim.device.calibration import DEFAULT_STARTS, CalibrationGrid, CalibrationReport, calibrate
from vcmsim.device.params import PhysicalParams
from vcmsim.device.pulses import PulseSpec
from vcmsim.device.surrogate import FitCoefficients
from vcmsim.repositories.parameter_files import KeyValueRecord, ParameterFileRepository

logger = logging.getLogger(__name__)


def report_path(coeffs_path) -> Path:
    path = Path(coeffs_path)
    return path.with_name(f"{path.stem}.report.json")


@dataclass
class FittedCoefficients:
    coeffs: FitCoefficients
    record: KeyValueRecord
    report: CalibrationReport | None = None


class CoefficientService:
    def __init__(self, directory, repo: ParameterFileRepository | None = None):
        self.directory = Path(directory)
        self.repo = repo or ParameterFileRepository()

    def default_path(self, params_record: KeyValueRecord) -> Path:
        return self.directory / f"{Path(params_record.path).stem}.coeffs"

    def load(self, path) -> FittedCoefficients:
        """Coefficients plus the report stored beside them, if any."""
        coeffs, record = self.repo.load_coeffs(path)
        report = report_path(path)
        return FittedCoefficients(coeffs, record, self.repo.load_report(report) if report.exists() else None)

    def is_current(self, path, params_record: KeyValueRecord) -> bool:
        report = report_path(path)
        if not (Path(path).exists() and report.exists()):
            return False
        return self.repo.load_report(report).params_sha256 == params_record.sha256

    def install(
        self,
        params: PhysicalParams,
        params_record: KeyValueRecord,
        path=None,
        grid: CalibrationGrid | None = None,
        seed: int = 0,
        starts: int = DEFAULT_STARTS,
        initial: FitCoefficients | None = None,
        strict: bool = False,
    ) -> FittedCoefficients:
        """Calibrate against a parameter file and write the coefficients with their report."""
        path = Path(path) if path is not None else self.default_path(params_record)
        coeffs, report = calibrate(params, grid, seed=seed, initial=initial, starts=starts, strict=strict)
        report.params_file = str(params_record.path)
        report.params_sha256 = params_record.sha256
        header = f"fitted against {Path(params_record.path).name} (sha256 {params_record.sha256}), seed {seed}"
        self.repo.save_coeffs(coeffs, path, header)
        self.repo.save_report(report, report_path(path))
        return self.load(path)

    def default_for(self, params: PhysicalParams, params_record: KeyValueRecord) -> FittedCoefficients:
        """The default set for a parameter file, calibrated first if missing or stale."""
        path = self.default_path(params_record)
        if self.is_current(path, params_record):
            return self.load(path)
        logger.warning(
            "no coefficients fitted to %s (sha256 %.12s) in %s; running calibrate",
            Path(params_record.path).name, params_record.sha256, self.directory,
        )  # fmt: skip
        return self.install(params, params_record, path)


def uncovered_amplitudes(report: CalibrationReport | None, pulses: Iterable[PulseSpec]) -> list[float]:
    """Amplitudes outside the voltages the full model was solved at during calibration."""
    if report is None:
        return []
    outside = [p.amplitude for p in pulses if not report.covers(p.amplitude)]
    for amplitude in outside:
        logger.warning(
            "pulse amplitude %+.4g V is outside the calibrated range; the fitted current is extrapolated", amplitude
        )
    return outside
