import math

import pytest

from su11readout.calibration import calibrate, readout_metrics, with_parameters
from su11readout.devices import OutputChainParams
from su11readout.errors import CalibrationFailed, InvalidArgument
from su11readout.interferometer import InterferometerConfig


def test_with_parameters_ties_upper_arm():
    c = with_parameters(InterferometerConfig(), {"eta_lower": 0.7}, 0.9)
    assert c.eta_upper == pytest.approx(0.63)


def test_metrics_baseline_consistency():
    m = readout_metrics(InterferometerConfig())
    assert m["sigma_ratio_high"] > 1 > m["sigma_ratio_low"]
    assert m["snr_gain"] > 1 > m["snr_gain_high"]


def test_metrics_independent_of_drive():
    c = InterferometerConfig()
    a = readout_metrics(c, drive_amp=0.5)["snr_gain"]
    b = readout_metrics(c, drive_amp=7.0, drive_phase=1.0)["snr_gain"]
    assert a == pytest.approx(b, rel=1e-10)


def test_snr_only_target_from_lossless_start():
    c = InterferometerConfig(entangler_gain_db=1.5, eta_upper=1.0, eta_lower=1.0, chain=OutputChainParams(math.inf))
    res = calibrate(c, targets={"snr_gain": 1.44}, free=("entangler_gain_db",), scan_points=7)
    assert res.success
    assert res.metrics["snr_gain"] == pytest.approx(1.44, rel=0.05)


def test_infeasible_target_fails_with_report():
    c = InterferometerConfig(entangler_gain_db=1.0)
    with pytest.raises(CalibrationFailed) as info:
        calibrate(c, targets={"snr_gain": 100.0}, free=("eta_lower", "analyzer_efficiency"), scan_points=3)
    report = info.value.report
    assert report["reachable"]["snr_gain"] is False
    assert abs(report["relative_residuals"]["snr_gain"]) > 0.05
    assert info.value.exit_code == 4


def test_rejects_unknown_targets_and_free():
    with pytest.raises(InvalidArgument):
        calibrate(InterferometerConfig(), targets={"bogus": 1.0})
    with pytest.raises(InvalidArgument):
        calibrate(InterferometerConfig(), free=("kappa",))
