from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from vcmsim.device.dynamics import PulseTrace, SwitchingCurve
from vcmsim.repositories.parameter_files import KeyValueRecord
from vcmsim.training.trainer import RunResult

logger = logging.getLogger(__name__)

METADATA_PREFIX = "# "


def run_metadata(
    params_record: KeyValueRecord | None,
    coeffs_record: KeyValueRecord | None,
    seed: int | None,
    config: dict | None = None,
    **extra,
) -> dict:
    """Provenance block embedded at the top of every output file."""
    return {
        "params_file": str(params_record.path) if params_record and params_record.path else None,
        "params_sha256": params_record.sha256 if params_record else None,
        "coeffs_file": str(coeffs_record.path) if coeffs_record and coeffs_record.path else None,
        "coeffs_sha256": coeffs_record.sha256 if coeffs_record else None,
        "seed": seed,
        "config": config or {},
        **extra,
    }


class ResultsService:
    """Writes result tables as CSV with a one-line JSON metadata header."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence], metadata: dict) -> Path:
        path = self._target(name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(METADATA_PREFIX + json.dumps(metadata, sort_keys=True, default=str) + "\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            writer.writerows(rows)
        logger.info("wrote %s", path)
        return path

    def save_json(self, name: str, payload: dict) -> Path:
        path = self._target(name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path

    def save_switching_curve(self, name: str, curve: SwitchingCurve, metadata: dict) -> Path:
        meta = {
            **metadata,
            "amplitude": curve.pulse.amplitude,
            "duration": curve.pulse.duration,
            "initial_G": curve.initial_G,
        }
        return self.write_csv(name, ("pulse_index", "N_d", "G"), curve.rows(), meta)

    def save_trace(self, name: str, trace: PulseTrace, metadata: dict) -> Path:
        return self.write_csv(name, PulseTrace.COLUMNS, trace.rows(), metadata)

    def save_run(self, name: str, result: RunResult, metadata: dict) -> Path:
        meta = {
            **metadata,
            "final_accuracy": result.final_accuracy,
            "wall_time": result.wall_time,
            "dw_per_pulse": result.dw_per_pulse,
        }
        rows = [
            (r.epoch, r.loss, r.test_acc, r.lr, r.pulses_applied, r.pulses_skipped) for r in result.epochs
        ]
        columns = ("epoch", "loss", "test_acc", "lr", "pulses_applied", "pulses_skipped")
        return self.write_csv(name, columns, rows, meta)


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Metadata, column names and a float table from a file written by ResultsService."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        reader = csv.reader(fh)
        if first.startswith(METADATA_PREFIX):
            metadata = json.loads(first[len(METADATA_PREFIX) :])
            columns = next(reader)
        else:
            metadata, columns = {}, next(csv.reader([first]))
        table = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    return metadata, columns, table.reshape(-1, len(columns))
