from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vcmsim.crossbar.tile import CrossbarTile
from vcmsim.device.state import DeviceState
from vcmsim.errors import ParameterFileError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class TileCheckpoint:
    """Everything needed to rebuild a tile bit-exactly, given the same device setup."""

    rows: int
    cols: int
    first_device_id: int
    w_max: float
    dw_per_pulse: float
    devices: DeviceState

    @classmethod
    def from_tile(cls, tile: CrossbarTile) -> TileCheckpoint:
        return cls(
            rows=tile.rows,
            cols=tile.cols,
            first_device_id=tile.first_device_id,
            w_max=tile.mapping.w_max,
            dw_per_pulse=tile.dw_per_pulse,
            devices=tile.devices.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "rows": self.rows,
            "cols": self.cols,
            "first_device_id": self.first_device_id,
            "w_max": self.w_max,
            "dw_per_pulse": self.dw_per_pulse,
        }

    def restore(self, params, coeffs, noise, window, pulses) -> CrossbarTile:
        return CrossbarTile(
            self.rows, self.cols, params, coeffs, noise, window, pulses,
            w_max=self.w_max, first_device_id=self.first_device_id,
            devices=self.devices.copy(), dw_per_pulse=self.dw_per_pulse,
        )  # fmt: skip


class CheckpointRepository:
    """Tile checkpoints as .npz archives: device arrays plus a JSON header."""

    def save(self, checkpoint: TileCheckpoint, path, metadata: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {**checkpoint.to_dict(), "metadata": metadata or {}}
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header)), **checkpoint.devices.to_arrays())
        logger.info("saved %dx%d tile checkpoint to %s", checkpoint.rows, checkpoint.cols, path)
        return path

    def load(self, path) -> tuple[TileCheckpoint, dict]:
        path = Path(path)
        try:
            with np.load(path, allow_pickle=False) as archive:
                header = json.loads(str(archive["header"]))
                devices = DeviceState.from_arrays({k: archive[k] for k in archive.files if k != "header"})
        except FileNotFoundError as e:
            raise ParameterFileError("checkpoint not found", str(path)) from e
        except (KeyError, ValueError) as e:
            raise ParameterFileError(f"corrupt checkpoint: {e}", str(path)) from e
        if header.get("version") != FORMAT_VERSION:
            raise ParameterFileError(f"unsupported checkpoint version {header.get('version')!r}", str(path))
        checkpoint = TileCheckpoint(
            rows=int(header["rows"]),
            cols=int(header["cols"]),
            first_device_id=int(header["first_device_id"]),
            w_max=float(header["w_max"]),
            dw_per_pulse=float(header["dw_per_pulse"]),
            devices=devices,
        )
        return checkpoint, header.get("metadata", {})
