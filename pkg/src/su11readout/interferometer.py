"""Two-JPC SU(1,1) interferometer with a dispersive cavity on the upper arm.

Mode 0 is the signal (upper) arm, which carries the cavity; mode 1 is the
idler (lower) arm. The record is taken at the analyzer signal output.
"""

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import gaussian as gs
from .devices import (
    CavityParams,
    JpcParams,
    OutputChainParams,
    QubitState,
    cavity_phase,
    drive_displacement,
    gain_db_to_r,
)
from .errors import AmbiguousRoots, DegenerateConfig, InvalidArgument, PhysicalityError

UPPER, LOWER = 0, 1
TWO_PI = 2 * math.pi
HETERODYNE_PENALTY = 0.5


@dataclass(frozen=True)
class InterferometerConfig:
    """Full set of interferometer knobs.

    The analyzer pump phase is ``entangler_phase + delta_phi``. Transmissions
    are power transmissions. ``eta_post_cavity`` is loss between the cavity and
    the analyzer (upper arm only) and ``analyzer_efficiency`` an input-referred
    loss in front of both analyzer ports.
    """

    entangler_gain_db: float = 2.0
    analyzer_gain_db: float = 20.0
    entangler_phase: float = 0.0
    delta_phi: float = math.pi
    eta_upper: float = 0.9 * 0.81
    eta_lower: float = 0.81
    eta_post_cavity: float = 1.0
    analyzer_efficiency: float = 1.0
    cavity: CavityParams = field(default_factory=CavityParams)
    input_occupation: float = 0.0
    chain: OutputChainParams = field(default_factory=OutputChainParams)
    signal_scale: float = 1.0

    def __post_init__(self):
        for name in ("entangler_gain_db", "analyzer_gain_db", "entangler_phase", "delta_phi"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgument(f"{name} must be finite")
        gain_db_to_r(self.entangler_gain_db)
        gain_db_to_r(self.analyzer_gain_db)
        for name in ("eta_upper", "eta_lower", "eta_post_cavity", "analyzer_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1], got {v!r}")
        if not self.input_occupation >= 0:
            raise InvalidArgument("input_occupation must be >= 0")
        if not self.signal_scale > 0:
            raise InvalidArgument("signal_scale must be > 0")
        object.__setattr__(self, "delta_phi", float(self.delta_phi) % TWO_PI)

    @property
    def entangler(self):
        return JpcParams(self.entangler_gain_db, self.entangler_phase)

    @property
    def analyzer(self):
        return JpcParams(self.analyzer_gain_db, self.entangler_phase + self.delta_phi)

    @property
    def delta_theta(self):
        """Cavity phase difference theta_e - theta_g."""
        return cavity_phase(self.cavity, QubitState.e) - cavity_phase(self.cavity, QubitState.g)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def baseline(self):
        """Same device with the entangler switched off (CS + PP readout)."""
        return self.replace(entangler_gain_db=0.0)


@dataclass(frozen=True, eq=False)
class OutputMoments:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def sigma(self):
        """Average of the two quadrature standard deviations."""
        return float(np.mean(np.sqrt(np.diag(self.cov))))


def _pre_analyzer(config, qs, drive_amp=0.0, drive_phase=0.0, input_displacement=0j):
    """Two-mode state arriving at the analyzer inputs."""
    state = gs.thermal_state(2, config.input_occupation)
    state = gs.displace(state, UPPER, input_displacement)
    state = gs.two_mode_squeeze(state, UPPER, LOWER, config.entangler.r, config.entangler_phase)
    state = gs.loss_channel(state, UPPER, config.eta_upper)
    state = gs.loss_channel(state, LOWER, config.eta_lower)
    state = gs.phase_shift(state, UPPER, cavity_phase(config.cavity, qs))
    alpha = drive_displacement(drive_amp, drive_phase, config.cavity, qs) * config.signal_scale
    state = gs.displace(state, UPPER, alpha)
    state = gs.loss_channel(state, UPPER, config.eta_post_cavity)
    state = gs.loss_channel(state, UPPER, config.analyzer_efficiency)
    state = gs.loss_channel(state, LOWER, config.analyzer_efficiency)
    if not gs.check_physical(state):
        raise PhysicalityError("state entering the analyzer is unphysical")
    return state


def _check_inputs(*values):
    for v in values:
        if not np.all(np.isfinite(np.asarray(v, dtype=complex))):
            raise InvalidArgument(f"parameters must be finite, got {v!r}")


def chain_noise(config):
    """Record-referred variance added per quadrature by the output chain."""
    base = _pre_analyzer(config.baseline(), QubitState.g)
    out = gs.two_mode_squeeze(base, UPPER, LOWER, config.analyzer.r, config.analyzer.pump_phase)
    v_cs = float(np.mean(np.diag(gs.marginal(out, UPPER)[1])))
    added = 0.0 if math.isinf(config.chain.nvr_db) else v_cs / (10.0 ** (config.chain.nvr_db / 10.0) - 1.0)
    if config.chain.include_heterodyne_penalty:
        added += HETERODYNE_PENALTY
    return added


def propagate(config, qs, drive_amp=0.0, drive_phase=0.0, record=False, input_displacement=0j):
    """Moments of the analyzer signal output for qubit state ``qs``.

    With ``record=True`` the covariance includes the output-chain noise fixed
    by the NVR at the CS+PP setting. ``input_displacement`` is a coherent
    amplitude injected at the entangler signal input (used for S-parameter
    checks; the readout drive enters through ``drive_amp`` instead).
    """
    _check_inputs(drive_amp, drive_phase, input_displacement)
    state = _pre_analyzer(config, qs, drive_amp, drive_phase, input_displacement)
    state = gs.two_mode_squeeze(state, UPPER, LOWER, config.analyzer.r, config.analyzer.pump_phase)
    if not gs.check_physical(state):
        raise PhysicalityError("interferometer output is unphysical")
    mean, cov = gs.marginal(state, UPPER)
    if record:
        cov = cov + chain_noise(config) * np.eye(2)
    return OutputMoments(mean, cov)


def _analyzer_stage(C, config, delta_phis):
    phis = config.entangler_phase + np.asarray(delta_phis, dtype=float)
    caa, cab, cbb = C[:2, :2], C[:2, 2:], C[2:, 2:]
    r = config.analyzer.r
    ch, sh = math.cosh(r), math.sinh(r)
    c, s = np.cos(phis), np.sin(phis)
    refl = np.stack([np.stack([c, s], -1), np.stack([s, -c], -1)], -2)
    return (
        ch**2 * caa
        + sh**2 * np.einsum("nij,jk,nlk->nil", refl, cbb, refl)
        + ch * sh * (np.einsum("ij,nkj->nik", cab, refl) + np.einsum("nij,kj->nik", refl, cab))
    )


def output_covariances(config, qs, delta_phis, record=True):
    """Signal-port covariance for many relative pump phases at once.

    Returns an array of shape ``(len(delta_phis), 2, 2)``. Only the analyzer
    stage depends on the pump phase, so the pre-analyzer state is computed
    once and the analyzer squeeze applied to every phase in bulk.
    """
    out = _analyzer_stage(_pre_analyzer(config, qs).cov, config, delta_phis)
    if record:
        out = out + chain_noise(config) * np.eye(2)
    return out


def sigma_difference(config, record=True):
    """Return ``f(delta_phis) -> (sigma_g - sigma_e, sigma_g)`` with cached state."""
    cg = _pre_analyzer(config, QubitState.g).cov
    ce = _pre_analyzer(config, QubitState.e).cov
    added = chain_noise(config) if record else 0.0

    def f(delta_phis):
        g = _sigma_of(_analyzer_stage(cg, config, np.atleast_1d(delta_phis)) + added * np.eye(2))
        e = _sigma_of(_analyzer_stage(ce, config, np.atleast_1d(delta_phis)) + added * np.eye(2))
        return g - e, g

    return f


def _sigma_of(covs):
    return np.sqrt(np.diagonal(covs, axis1=-2, axis2=-1)).mean(axis=-1)


def s_aa(config, qs):
    """Signal-to-signal amplitude gain of the lossy interferometer."""
    theta = cavity_phase(config.cavity, qs)
    eta_u = config.eta_upper * config.eta_post_cavity * config.analyzer_efficiency
    eta_l = config.eta_lower * config.analyzer_efficiency
    re, ra = config.entangler.r, config.analyzer.r
    return complex(
        math.sqrt(eta_u) * np.exp(1j * theta) * math.cosh(re) * math.cosh(ra)
        + math.sqrt(eta_l) * np.exp(1j * config.delta_phi) * math.sinh(re) * math.sinh(ra)
    )


@dataclass(frozen=True, eq=False)
class PhaseSweep:
    delta_phi: np.ndarray
    sigma_g: np.ndarray
    sigma_e: np.ndarray
    sigma_baseline: float

    @property
    def sigma_normalized_g(self):
        return self.sigma_g / self.sigma_baseline

    @property
    def sigma_normalized_e(self):
        return self.sigma_e / self.sigma_baseline

    def rows(self):
        return zip(self.delta_phi, self.sigma_g, self.sigma_e, self.sigma_normalized_g, self.sigma_normalized_e)


def baseline_sigma(config, record=True):
    base = config.baseline()
    return float(_sigma_of(output_covariances(base, QubitState.g, [base.delta_phi], record=record))[0])


def phase_sweep(config, grid, record=True):
    """Noise sigma versus relative pump phase for both qubit states, drive off."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidArgument("phase grid must not be empty")
    sg = _sigma_of(output_covariances(config, QubitState.g, grid, record))
    se = _sigma_of(output_covariances(config, QubitState.e, grid, record))
    return PhaseSweep(grid, sg, se, baseline_sigma(config, record))


@dataclass(frozen=True)
class MatchedPoints:
    delta_phi_high: float
    delta_phi_low: float
    sigma_high: float
    sigma_low: float

    @property
    def separation(self):
        return (self.delta_phi_low - self.delta_phi_high) % TWO_PI


def find_matched_points(config, n_scan=720, tol=1e-9, record=True):
    """Locate the two relative pump phases where sigma_g equals sigma_e."""
    dtheta = config.delta_theta % TWO_PI
    if min(dtheta, TWO_PI - dtheta) < 1e-12:
        raise DegenerateConfig("theta_e equals theta_g: all phases matched")

    diff = sigma_difference(config, record)
    grid = TWO_PI * np.arange(n_scan) / n_scan
    d, sg = diff(grid)
    if np.max(np.abs(d)) < 1e-12 * max(1.0, float(np.max(sg))):
        raise DegenerateConfig("noise is qubit-state independent at every phase: all phases matched")

    brackets = []
    for k in range(n_scan):
        da, db = d[k], d[(k + 1) % n_scan]
        if da == 0.0:
            brackets.append((grid[k], grid[k]))
        elif da * db < 0:
            brackets.append((grid[k], grid[k] + TWO_PI / n_scan))
    if len(brackets) != 2:
        raise AmbiguousRoots(
            f"expected 2 sign changes of sigma_g - sigma_e on a {n_scan}-point scan, "
            f"found {len(brackets)} near {[round(math.degrees(a), 3) for a, _ in brackets]} deg"
        )

    roots = []
    for a, b in brackets:
        fa = diff(a)[0][0]
        for _ in range(200):
            m = 0.5 * (a + b)
            if m in (a, b):
                break
            fm = diff(m)[0][0]
            if fm == 0.0:
                a = b = m
                break
            if fa * fm < 0:
                b = m
            else:
                a, fa = m, fm
        x = 0.5 * (a + b)
        fx, sx = diff(x)
        if abs(fx[0]) >= tol:
            raise AmbiguousRoots(f"bisection stalled at {x}: |sigma_g - sigma_e| = {abs(fx[0])}")
        roots.append((x % TWO_PI, float(sx[0])))

    (x1, s1), (x2, s2) = roots
    if abs(s1 - s2) <= tol:
        raise AmbiguousRoots(f"matched points share the same sigma {s1}: High/Low undefined")
    if s1 < s2:
        (x1, s1), (x2, s2) = (x2, s2), (x1, s1)
    return MatchedPoints(x1, x2, s1, s2)
