import math

import numpy as np
import pytest
from scipy.optimize import curve_fit

from su11readout.backaction import (
    REFERENCE_ETA,
    BackactionParams,
    backaction_xyz,
    fit_efficiency,
    fit_strength_z,
    generate_tomography,
    line_cut,
    nvr_analysis,
    t2_corrected_eta,
)
from su11readout.errors import InvalidArgument


def test_xyz_origin_no_decay():
    x, y, z = backaction_xyz(0.0, 0.0, BackactionParams.from_strength(0.66, 1.0))
    assert (float(x), float(y), float(z)) == (0.0, 1.0, 0.0)


def test_xyz_z_component():
    _, _, z = backaction_xyz(1.0, 0.3, BackactionParams.from_strength(0.66, 0.4))
    assert float(z) == pytest.approx(math.tanh(0.66), abs=5e-4)
    assert float(z) == pytest.approx(0.578, abs=5e-4)


def test_xyz_decay():
    _, y, _ = backaction_xyz(0.0, 0.0, BackactionParams.from_strength(0.66, 0.5))
    assert float(y) == pytest.approx(math.exp(-0.4356), rel=1e-12)
    assert float(y) == pytest.approx(0.6469, abs=1e-4)


def test_xyz_bloch_vector_length():
    p = BackactionParams.from_strength(0.9, 1.0, sigma=1.3)
    i, q = np.meshgrid(np.linspace(-3, 3, 7), np.linspace(-3, 3, 7))
    x, y, z = backaction_xyz(i, q, p)
    np.testing.assert_allclose(x**2 + y**2 + z**2, 1.0, atol=1e-12)


def test_params_validation():
    with pytest.raises(InvalidArgument):
        BackactionParams(0.66, eta=0.0)
    with pytest.raises(InvalidArgument):
        BackactionParams(0.66, sigma=-1.0)


@pytest.fixture(scope="module")
def datasets():
    out = {}
    for k, eta in enumerate((0.46, 1.0)):
        p = BackactionParams.from_strength(0.66, eta)
        out[eta] = generate_tomography(p, 1_000_000, seed=17, stream=k)
    return out


def test_tomography_deterministic():
    p = BackactionParams.from_strength(0.66, 0.5)
    a = generate_tomography(p, 5000, seed=1, workers=1)
    b = generate_tomography(p, 5000, seed=1, workers=4)
    np.testing.assert_array_equal(a.shots.records, b.shots.records)
    np.testing.assert_array_equal(a.outcome, b.outcome)


def test_strength_recovery(datasets):
    for ds in datasets.values():
        assert fit_strength_z(ds).strength == pytest.approx(0.66, abs=0.01)


def test_no_measurement_flag():
    p = BackactionParams(0.0, sigma=1.0, eta=1.0)
    sf = fit_strength_z(generate_tomography(p, 60_000, seed=3))
    assert abs(sf.strength) < 0.05
    assert sf.no_measurement


def test_efficiency_recovery(datasets):
    ef = fit_efficiency(datasets[0.46], 0.66)
    assert ef.eta_fit == pytest.approx(0.46, abs=0.02)
    assert ef.eta_halfwidth < 0.02


def test_unit_efficiency(datasets):
    ef = fit_efficiency(datasets[1.0], 0.66)
    assert ef.eta_fit >= 0.98


def test_y_oscillation_period(datasets):
    cut = line_cut(datasets[1.0], 0.66, n_bins=48, extent=4.0)
    # with eta = 1 the I_m = 0 cut is cos(k v) with unit envelope and period 2 pi / k
    popt, _ = curve_fit(lambda v, a, k: a * np.cos(k * v), cut.v, cut.y, p0=(1.0, 0.5),
                        sigma=1 / np.sqrt(cut.count_y))
    assert 2 * math.pi / popt[1] == pytest.approx(2 * math.pi / 0.66, rel=0.03)
    assert popt[0] == pytest.approx(1.0, abs=0.03)


def test_z_cut_independent_of_eta(datasets):
    a = fit_strength_z(datasets[0.46]).strength
    b = fit_strength_z(datasets[1.0]).strength
    assert abs(a - b) < 0.02


def test_q_bar_recovered():
    p = BackactionParams.from_strength(0.66, 0.5, q_bar=0.8)
    ds = generate_tomography(p, 600_000, seed=21)
    ef = fit_efficiency(ds, 0.66)
    assert ef.eta_fit == pytest.approx(0.5, abs=0.03)
    assert ef.q_bar_fit == pytest.approx(0.8, abs=0.15)


def test_t2_correction():
    assert t2_corrected_eta(0.46, 0.66, 0.0, 4.4e-6).eta == pytest.approx(0.46)
    assert t2_corrected_eta(0.46, 0.66, 660e-9, math.inf).eta == pytest.approx(0.46)
    assert t2_corrected_eta(0.46, 0.66, 660e-9, 4.4e-6).eta == pytest.approx(0.55, abs=0.005)
    clipped = t2_corrected_eta(0.99, 0.66, 660e-9, 1e-7)
    assert clipped.clipped and clipped.eta == 1.0


def test_nvr_algebra():
    a = nvr_analysis(7.0, 0.46, 1.21, 0.86)
    assert a.eta_amp == pytest.approx(0.46 / (1 - 10 ** -0.7), rel=1e-12)
    assert a.eta_amp == pytest.approx(0.575, abs=0.005)
    assert a.eta_high == pytest.approx(0.49, abs=0.005)
    assert a.eta_low == pytest.approx(0.43, abs=0.005)
    c = a.consistency()
    assert not c["explained_by_nvr"]
    assert "cannot be explained by NVR changes alone" in c["statement"]


def test_nvr_curves_monotone():
    a = nvr_analysis(7.0, 0.46, 1.21, 0.86)
    for key in ("eta_amp_0.35", "eta_amp_0.45", "eta_amp_0.55"):
        assert np.all(np.diff(a.curves[key]) > 0)


def test_nvr_rejects_impossible_efficiency():
    with pytest.raises(InvalidArgument):
        nvr_analysis(1.0, 0.46, 1.21, 0.86)


def test_reference_constants():
    assert REFERENCE_ETA == {"cs": 0.46, "tms_high": 0.58, "tms_low": 0.29}
