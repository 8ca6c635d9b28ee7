import logging

import pytest

from vcmsim.config import DEFAULT_PARAMS
from vcmsim.device.calibration import BranchReport, CalibrationReport
from vcmsim.device.pulses import PulseSpec
from vcmsim.repositories.parameter_files import ParameterFileRepository
from vcmsim.services.coefficients import CoefficientService, report_path, uncovered_amplitudes


def _report(coeffs):
    return CalibrationReport(
        grid={},
        seed=0,
        starts=1,
        coefficients=coeffs.to_dict(),
        branches={
            "set": BranchReport(0.01, 0.002, 4, 0, v_min=-1.2, v_max=-0.05),
            "reset": BranchReport(0.02, 0.004, 4, 6, v_min=0.05, v_max=0.45),
        },
    )


@pytest.fixture
def params_record():
    return ParameterFileRepository().load_params(DEFAULT_PARAMS)[1]


@pytest.fixture
def service(tmp_path):
    return CoefficientService(tmp_path / "coeffs")


class TestCoefficientService:
    def test_default_path_follows_the_parameter_file(self, service, params_record, tmp_path):
        """One default set per parameter-file stem"""
        path = service.default_path(params_record)
        assert path == tmp_path / "coeffs" / "jart_vcm_v1b.coeffs"
        assert report_path(path) == tmp_path / "coeffs" / "jart_vcm_v1b.report.json"

    def test_install_stamps_the_parameter_checksum(self, service, params, params_record, coeffs, mocker):
        """Installed reports name the parameter file they were fitted to"""
        mocker.patch("vcmsim.services.coefficients.calibrate", return_value=(coeffs, _report(coeffs)))
        fitted = service.install(params, params_record)
        assert fitted.coeffs == coeffs
        assert fitted.report.params_sha256 == params_record.sha256
        assert service.is_current(service.default_path(params_record), params_record)

    def test_stale_report_triggers_a_refit(self, service, params, params_record, coeffs, mocker):
        """A report for another parameter checksum is refitted"""
        fit = mocker.patch("vcmsim.services.coefficients.calibrate", return_value=(coeffs, _report(coeffs)))
        service.default_for(params, params_record)
        service.default_for(params, params_record)
        assert fit.call_count == 1

        path = service.default_path(params_record)
        stale = service.repo.load_report(report_path(path))
        stale.params_sha256 = "00" * 32
        service.repo.save_report(stale, report_path(path))
        assert not service.is_current(path, params_record)
        service.default_for(params, params_record)
        assert fit.call_count == 2

    def test_load_without_report(self, service, coeffs, tmp_path):
        """Hand-written coefficient files load with no report"""
        path = service.repo.save_coeffs(coeffs, tmp_path / "hand.coeffs")
        assert service.load(path).report is None


class TestUncoveredAmplitudes:
    def test_flags_only_amplitudes_outside_the_fit(self, coeffs, caplog):
        """RESET beyond the solvable range warns, in-range SET does not"""
        pulses = [PulseSpec(amplitude=-0.75, duration=1e-7), PulseSpec(amplitude=1.15, duration=1e-7)]
        with caplog.at_level(logging.WARNING, logger="vcmsim.services.coefficients"):
            assert uncovered_amplitudes(_report(coeffs), pulses) == [1.15]
        assert "+1.15 V is outside the calibrated range" in caplog.text

    def test_no_report_no_warning(self):
        """Without a report nothing is known to be extrapolated"""
        assert uncovered_amplitudes(None, [PulseSpec(amplitude=1.15, duration=1e-7)]) == []
