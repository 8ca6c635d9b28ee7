from __future__ import annotations

from typing import Any


class VcmSimError(Exception):
    """Base class for every error raised by the simulator."""


class InvalidArgumentError(VcmSimError, ValueError):
    pass


class ParameterFileError(VcmSimError, ValueError):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SchottkyDomainError(VcmSimError, ValueError):
    """Barrier-lowering fourth root got a negative argument."""

    def __init__(self, v_sch: float, message: str | None = None):
        super().__init__(
            message or f"Schottky barrier lowering undefined at V_Sch={v_sch!r} V (beyond flat band)"
        )
        self.v_sch = v_sch


class SaturationError(VcmSimError, OverflowError):
    pass


class ConsistencyError(VcmSimError, RuntimeError):
    pass


class ConvergenceError(VcmSimError, RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class SurrogateEvaluationError(VcmSimError, ArithmeticError):
    def __init__(self, message: str, inputs: dict[str, Any]):
        super().__init__(f"{message}; inputs={inputs}")
        self.inputs = inputs


class PartitionError(VcmSimError, ValueError):
    pass


class CalibrationError(VcmSimError, RuntimeError):
    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class FieldTooStrongError(VcmSimError, ValueError):
    pass


class StiffnessError(VcmSimError, RuntimeError):
    pass


class SamplingError(VcmSimError, ValueError):
    pass


class SearchError(VcmSimError, ValueError):
    pass


class DimensionError(VcmSimError, ValueError):
    pass


class DatasetFormatError(VcmSimError, ValueError):
    def __init__(self, message: str, path: str, offset: int):
        super().__init__(f"{path} @ offset {offset}: {message}")
        self.path = path
        self.offset = offset


class TrainingError(VcmSimError, RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
