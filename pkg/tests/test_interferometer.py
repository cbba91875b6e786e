import math

import numpy as np
import pytest

from su11readout import gaussian as gs
from su11readout.devices import CavityParams, OutputChainParams, PhaseMode, QubitState
from su11readout.errors import DegenerateConfig, InvalidArgument
from su11readout.interferometer import (
    InterferometerConfig,
    baseline_sigma,
    find_matched_points,
    output_covariances,
    phase_sweep,
    propagate,
    s_aa,
)

G, E = QubitState.g, QubitState.e
NOISELESS = OutputChainParams(math.inf)


def lossless(ge=2.0, ga=20.0, **kw):
    kw.setdefault("cavity", CavityParams(calibrated_delta_theta=0.0))
    return InterferometerConfig(entangler_gain_db=ge, analyzer_gain_db=ga, eta_upper=1.0, eta_lower=1.0,
                                chain=NOISELESS, **kw)


def test_baseline_is_single_amplifier():
    c = InterferometerConfig(entangler_gain_db=0.0, analyzer_gain_db=20.0)
    out = propagate(c, G)
    np.testing.assert_allclose(out.cov, 99.5 * np.eye(2), rtol=1e-12, atol=1e-12)


def test_su11_cancellation():
    out = propagate(lossless(20.0, 20.0, delta_phi=math.pi), G)
    np.testing.assert_allclose(out.cov, 0.5 * np.eye(2), atol=1e-9)


def test_signal_gain_independent_of_phase_and_entangler():
    amps = []
    for ge in (0.0, 1.5, 4.0):
        for phi in np.linspace(0, 2 * math.pi, 9):
            amps.append(np.hypot(*propagate(lossless(ge, delta_phi=phi), G, drive_amp=1.3).mean))
    np.testing.assert_allclose(amps, amps[0], rtol=1e-12)
    assert amps[0] == pytest.approx(1.3 * math.sqrt(2) * 10.0, rel=1e-12)


def test_entangler_matrix_oracle():
    # state just before the analyzer equals an explicit TMS on vacuum
    c = lossless(3.0, 0.0, delta_phi=0.0)
    r = c.entangler.r
    ref = gs.two_mode_squeeze(gs.vacuum_state(2), 0, 1, r, 0.0)
    _, cov = gs.marginal(ref, 0)
    np.testing.assert_allclose(propagate(c, G).cov, cov, rtol=1e-12)


@pytest.mark.parametrize("r", [0.2, 0.9, 1.7])
def test_s_aa_lossless_limits(r):
    db = 10 * math.log10(math.cosh(r) ** 2)
    gain = math.cosh(r) ** 2
    assert abs(s_aa(lossless(db, db, delta_phi=math.pi), G)) == pytest.approx(1.0, abs=1e-9)
    assert abs(s_aa(lossless(db, db, delta_phi=0.0), G)) == pytest.approx(2 * gain - 1, rel=1e-12)


def test_s_aa_without_entangler():
    c = InterferometerConfig(entangler_gain_db=0.0, analyzer_gain_db=20.0)
    theta = c.delta_theta
    expected = math.sqrt(c.eta_upper * 100.0) * np.exp(1j * theta)
    assert s_aa(c, E) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("ge, phi", [(0.67, 0.3), (9.15, 2.0), (2.0, math.pi)])
def test_s_aa_matches_propagation(ge, phi):
    c = InterferometerConfig(entangler_gain_db=ge, analyzer_gain_db=10.0, delta_phi=phi)
    out = propagate(c, G, input_displacement=1.0)
    s = s_aa(c, G)
    np.testing.assert_allclose(out.mean, [math.sqrt(2) * s.real, math.sqrt(2) * s.imag], rtol=1e-10, atol=1e-10)


def test_sweep_baseline_flat():
    c = InterferometerConfig().baseline()
    sw = phase_sweep(c, np.linspace(0, 2 * math.pi, 13))
    np.testing.assert_allclose(sw.sigma_normalized_g, 1.0, rtol=1e-12)


def test_sweep_interference_lossless():
    sw = phase_sweep(lossless(1.5), np.linspace(0, 2 * math.pi, 721))
    assert sw.sigma_normalized_g.min() < 1 < sw.sigma_normalized_g.max()


def test_lossless_noise_power_bound():
    sw = phase_sweep(lossless(1.5), np.linspace(0, 2 * math.pi, 3601))
    assert 1 / sw.sigma_normalized_g.min() ** 2 == pytest.approx(3.35, abs=0.01)


def test_phase_translation():
    c = InterferometerConfig()
    grid = np.linspace(0, 2 * math.pi, 37)
    sg = phase_sweep(c, grid - c.delta_theta).sigma_g
    se = phase_sweep(c, grid).sigma_e
    np.testing.assert_allclose(se, sg, rtol=1e-12)


def test_noise_is_sinusoidal_in_phase():
    c = InterferometerConfig()
    grid = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    v = np.trace(output_covariances(c, G, grid), axis1=1, axis2=2)
    amps = np.abs(np.fft.rfft(v))
    assert np.all(amps[2:] < 1e-9 * amps[0])


def test_matched_points_default():
    c = InterferometerConfig()
    mp = find_matched_points(c)
    assert mp.sigma_high > mp.sigma_low
    for phi in (mp.delta_phi_high, mp.delta_phi_low):
        cc = c.replace(delta_phi=phi)
        assert propagate(cc, G, record=True).sigma == pytest.approx(propagate(cc, E, record=True).sigma, rel=1e-9)


def test_matched_points_midway_from_extrema():
    c = InterferometerConfig()
    grid = np.linspace(0, 2 * math.pi, 36001)
    sg = phase_sweep(c, grid).sigma_g
    phi_min = grid[np.argmin(sg)]
    mp = find_matched_points(c)
    # matched roots sit Delta_theta/2 past an extremum of sigma_g
    offsets = [(phi - phi_min - c.delta_theta / 2) % math.pi for phi in (mp.delta_phi_high, mp.delta_phi_low)]
    for off in offsets:
        assert min(off, math.pi - off) < 1e-3


def test_matched_points_degenerate():
    c = InterferometerConfig(cavity=CavityParams(calibrated_delta_theta=0.0))
    with pytest.raises(DegenerateConfig):
        find_matched_points(c)
    with pytest.raises(DegenerateConfig):
        find_matched_points(InterferometerConfig().baseline())


@pytest.mark.xfail(strict=True, reason="a linear Gaussian model puts the two matched roots exactly pi apart")
def test_matched_separation_about_140_degrees():
    mp = find_matched_points(InterferometerConfig())
    assert math.degrees(mp.separation) == pytest.approx(140.0, abs=10.0)


def test_physical_mode_matched_points():
    cav = CavityParams(phase_mode=PhaseMode.physical)
    mp = find_matched_points(InterferometerConfig(cavity=cav))
    assert mp.separation == pytest.approx(math.pi, abs=1e-9)


def test_invalid_config():
    with pytest.raises(InvalidArgument):
        InterferometerConfig(eta_upper=1.2)
    with pytest.raises(InvalidArgument):
        InterferometerConfig(entangler_gain_db=-1)
    with pytest.raises(InvalidArgument):
        propagate(InterferometerConfig(), G, drive_amp=float("nan"))


def test_record_noise_adds_to_baseline():
    c = InterferometerConfig()
    v_amp = baseline_sigma(c, record=False) ** 2
    v_rec = baseline_sigma(c, record=True) ** 2
    nvr = 10 ** 0.7
    assert v_rec == pytest.approx(v_amp * nvr / (nvr - 1), rel=1e-12)
