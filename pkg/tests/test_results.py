import numpy as np
import pytest

from vcmsim.config import DEFAULT_PARAMS
from vcmsim.device.dynamics import SwitchingCurve
from vcmsim.device.pulses import PulseSpec
from vcmsim.repositories.parameter_files import ParameterFileRepository
from vcmsim.services.results import ResultsService, read_csv, run_metadata
from vcmsim.training.trainer import EpochRecord, RunResult


@pytest.fixture
def service(out_dir):
    return ResultsService(out_dir)


class TestRunMetadata:
    def test_records_file_checksums(self):
        """Input files are identified by path and sha256"""
        _, record = ParameterFileRepository().load_params(DEFAULT_PARAMS)
        meta = run_metadata(record, None, 7, {"noise": {}}, sigma=0.1)
        assert meta["params_file"] == str(DEFAULT_PARAMS)
        assert meta["params_sha256"] == record.sha256
        assert meta["coeffs_file"] is None
        assert (meta["seed"], meta["sigma"]) == (7, 0.1)


class TestResultsService:
    def test_csv_carries_metadata(self, service, out_dir):
        """The first line holds the metadata, then a header and the rows"""
        path = service.write_csv("table.csv", ("a", "b"), [(1, 2.5), (3, 4.5)], {"seed": 1})
        assert path == out_dir / "table.csv"
        metadata, columns, table = read_csv(path)
        assert metadata == {"seed": 1}
        assert columns == ["a", "b"]
        np.testing.assert_array_equal(table, [[1, 2.5], [3, 4.5]])

    def test_switching_curve_columns(self, service):
        """Curves are written per pulse with the pulse in the metadata"""
        curve = SwitchingCurve(
            pulse=PulseSpec(amplitude=-0.75, duration=1e-7),
            initial_G=2.4e-5,
            pulse_index=np.array([1, 2]),
            N_d=np.array([1e25, 2e25]),
            G=np.array([3e-5, 4e-5]),
        )
        metadata, columns, table = read_csv(service.save_switching_curve("curve.csv", curve, {}))
        assert columns == ["pulse_index", "N_d", "G"]
        assert metadata["amplitude"] == pytest.approx(-0.75)
        np.testing.assert_allclose(table[:, 2], [3e-5, 4e-5])

    def test_run_columns(self, service):
        """Training runs are one row per epoch with pulse counts"""
        result = RunResult(
            config={},
            epochs=[EpochRecord(0, 2.1, 0.4, 0.1, 120, 3), EpochRecord(1, 1.7, 0.6, 0.1, 90, 5)],
            final_accuracy=0.6,
            dw_per_pulse=[0.01],
        )
        metadata, columns, table = read_csv(service.save_run("run.csv", result, {"seed": 0}))
        assert columns == ["epoch", "loss", "test_acc", "lr", "pulses_applied", "pulses_skipped"]
        assert metadata["final_accuracy"] == pytest.approx(0.6)
        np.testing.assert_array_equal(table[:, 4], [120, 90])

    def test_empty_table(self, service):
        """A header-only file reads back as an empty table"""
        _, columns, table = read_csv(service.write_csv("empty.csv", ("x",), [], {}))
        assert columns == ["x"]
        assert table.shape == (0, 1)
