from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from vcmsim.device.calibration import CalibrationReport
from vcmsim.device.params import PhysicalParams
from vcmsim.device.surrogate import FitCoefficients
from vcmsim.errors import InvalidArgumentError, ParameterFileError

logger = logging.getLogger(__name__)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class KeyValueRecord:
    """Contents of a ``key = value  # provenance`` text file."""

    values: dict[str, float]
    provenance: dict[str, str] = field(default_factory=dict)
    path: Path | None = None
    sha256: str | None = None

    def to_text(self, header: str | None = None) -> str:
        lines = [f"# {line}" for line in header.splitlines()] if header else []
        for key, value in self.values.items():
            note = self.provenance.get(key)
            lines.append(f"{key} = {value!r}" + (f"  # {note}" if note else ""))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, path: Path | None = None) -> KeyValueRecord:
        values: dict[str, float] = {}
        provenance: dict[str, str] = {}
        where = str(path) if path else "<text>"
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body, _, note = raw.partition("#")
            if not body.strip():
                continue
            key, sep, value = body.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ParameterFileError(f"{where}:{lineno}: expected 'key = value'", where)
            if key in values:
                raise ParameterFileError(f"{where}:{lineno}: duplicate key {key!r}", where)
            try:
                values[key] = float(value.strip())
            except ValueError as e:
                raise ParameterFileError(f"{where}:{lineno}: {key} is not a number: {value.strip()!r}", where) from e
            if note.strip():
                provenance[key] = note.strip()
        return cls(values=values, provenance=provenance, path=path)


class ParameterFileRepository:
    """Reads and writes parameter, coefficient and calibration-report files."""

    def read_record(self, path) -> KeyValueRecord:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError as e:
            raise ParameterFileError("file not found", str(path)) from e
        record = KeyValueRecord.from_text(text, path)
        record.sha256 = file_sha256(path)
        return record

    def load_params(self, path) -> tuple[PhysicalParams, KeyValueRecord]:
        record = self.read_record(path)
        try:
            params = PhysicalParams.from_dict(record.values)
        except ParameterFileError as e:
            raise ParameterFileError(str(e), str(path)) from e
        logger.debug("loaded %d physical parameters from %s", len(record.values), path)
        return params, record

    def load_coeffs(self, path) -> tuple[FitCoefficients, KeyValueRecord]:
        record = self.read_record(path)
        try:
            coeffs = FitCoefficients.from_dict(record.values)
        except InvalidArgumentError as e:
            raise ParameterFileError(str(e), str(path)) from e
        return coeffs, record

    def save_coeffs(self, coeffs: FitCoefficients, path, header: str | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(KeyValueRecord(values=coeffs.to_dict()).to_text(header), encoding="utf-8")
        logger.info("wrote coefficients to %s", path)
        return path

    def load_report(self, path) -> CalibrationReport:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            return CalibrationReport.from_dict(data)
        except FileNotFoundError as e:
            raise ParameterFileError("calibration report not found", str(path)) from e
        except (ValueError, KeyError, TypeError) as e:
            raise ParameterFileError(f"unreadable calibration report: {e}", str(path)) from e

    def save_report(self, report: CalibrationReport, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
