"""Weak-measurement back-action, conditional tomography, and efficiency estimation.

A weak measurement of the state (|g> + i|e>)/sqrt(2) returns ``(I_m, Q_m)``
drawn from two isotropic Gaussians centred at ``(+-Ibar, Qbar)``. The qubit
is left with Bloch components

    x = sech(I Ibar/s^2) sin(Q Ibar/s^2 + (Qbar Ibar/s^2)(1-eta)/eta) exp(-(Ibar/s)^2 (1-eta)/eta)
    y = same with cos
    z = tanh(I Ibar/s^2)

The strength ``Ibar/s`` is read off the z back-action; the efficiency comes
from the amplitude of the x/y oscillation along the ``I_m = 0`` cut.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .devices import nvr_to_eta_out
from .errors import InsufficientData, InternalConsistencyError, InvalidArgument
from .readout import ShotSet
from .sampling import chunked

AXES = ("x", "y", "z")

# measured efficiencies for the three readout settings, kept for comparison only
REFERENCE_ETA = {"cs": 0.46, "tms_high": 0.58, "tms_low": 0.29}
REFERENCE_STRENGTH = 0.66


@dataclass(frozen=True)
class BackactionParams:
    i_bar: float
    q_bar: float = 0.0
    sigma: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument(f"sigma must be > 0, got {self.sigma!r}")
        if not 0 < self.eta <= 1:
            raise InvalidArgument(f"eta must lie in (0, 1], got {self.eta!r}")
        if not self.i_bar >= 0:
            raise InvalidArgument(f"i_bar must be >= 0, got {self.i_bar!r}")

    @property
    def strength(self):
        return self.i_bar / self.sigma

    @classmethod
    def from_strength(cls, strength, eta, sigma=1.0, q_bar=0.0):
        return cls(strength * sigma, q_bar, sigma, eta)


def backaction_xyz(i_m, q_m, p):
    """Conditional Bloch vector after a weak measurement with outcome ``(i_m, q_m)``."""
    if not p.eta > 0:
        raise InvalidArgument("eta must be > 0")
    k = p.i_bar / p.sigma**2
    lost = (1.0 - p.eta) / p.eta
    i_m, q_m = np.asarray(i_m, float), np.asarray(q_m, float)
    sech = 1.0 / np.cosh(i_m * k)
    phase = q_m * k + p.q_bar * k * lost
    decay = math.exp(-(p.strength**2) * lost)
    return sech * np.sin(phase) * decay, sech * np.cos(phase) * decay, np.tanh(i_m * k)


@dataclass(frozen=True, eq=False)
class TomographyDataset:
    shots: ShotSet
    params: BackactionParams
    seed: int
    dephasing: float = 1.0
    label: str = ""

    @property
    def axis(self):
        return self.shots.axis

    @property
    def outcome(self):
        return self.shots.outcome


def generate_tomography(p, n_shots, seed, t_window=0.0, t2=math.inf, stream=0, label="", workers=1):
    """Synthesize a conditional-tomography dataset.

    Shots cycle through the x, y, z tomography axes. The outcome is +1 with
    probability ``(1 + c)/2`` where ``c`` is the conditional Bloch component
    on that axis; x and y are additionally multiplied by ``exp(-t_window/t2)``.
    """
    dephasing = math.exp(-t_window / t2) if t_window else 1.0

    def draw(rng, m):
        sign = np.where(rng.random(m) < 0.5, 1.0, -1.0)
        rec = np.column_stack([sign * p.i_bar, np.full(m, p.q_bar)]) + p.sigma * rng.standard_normal((m, 2))
        return rec, rng.random(m)

    records, u = chunked(n_shots, seed, stream, draw, workers)
    axis_idx = np.arange(len(records)) % 3
    x, y, z = backaction_xyz(records[:, 0], records[:, 1], p)
    comp = np.choose(axis_idx, (dephasing * x, dephasing * y, z))
    prob = 0.5 * (1.0 + comp)
    if np.any(prob < 0) or np.any(prob > 1):
        raise InternalConsistencyError("outcome probability left [0, 1]")
    outcome = np.where(u < prob, 1, -1).astype(np.int8)
    axis = np.asarray(AXES)[axis_idx]
    shots = ShotSet(records, int(seed), label or "tomography", axis, outcome)
    return TomographyDataset(shots, p, int(seed), dephasing, label)


def estimate_sigma(ds):
    """Width of the outcome distribution from the Q quadrature, which both states share."""
    return float(np.std(ds.shots.q, ddof=1))


def _binned_means(abscissa, values, edges):
    idx = np.searchsorted(edges, abscissa, side="right") - 1
    ok = (idx >= 0) & (idx < len(edges) - 1)
    idx, abscissa, values = idx[ok], abscissa[ok], values[ok]
    nb = len(edges) - 1
    counts = np.bincount(idx, minlength=nb)
    xs = np.bincount(idx, abscissa, minlength=nb)
    vs = np.bincount(idx, values, minlength=nb)
    keep = counts > 0
    return xs[keep] / counts[keep], vs[keep] / counts[keep], counts[keep]


@dataclass(frozen=True)
class StrengthFit:
    strength: float
    halfwidth: float
    sigma: float
    no_measurement: bool

    def __float__(self):
        return self.strength


def fit_strength_z(ds, n_bins=40, extent=4.0):
    """Fit binned <z>_c versus I_m/sigma to ``tanh(a I_m/sigma)``; returns ``a``.

    Bins are weighted by their counts; each bin is placed at the mean
    abscissa of its shots.
    """
    sel = ds.axis == "z"
    if np.count_nonzero(sel) < 10:
        raise InsufficientData("not enough z-axis tomography shots to fit the strength")
    sigma = estimate_sigma(ds)
    u = ds.shots.i[sel] / sigma
    ub, zb, nb = _binned_means(u, ds.outcome[sel].astype(float), np.linspace(-extent, extent, n_bins + 1))
    if len(nb) < 2:
        raise InsufficientData("z-axis shots fall into fewer than two bins")
    w = np.sqrt(nb)

    sol = least_squares(lambda a: w * (np.tanh(a[0] * ub) - zb), x0=[0.5])
    a = float(sol.x[0])
    jac = ub / np.cosh(a * ub) ** 2
    info = np.sum(nb * jac**2)
    var = np.sum(nb * (1 - np.tanh(a * ub) ** 2) * jac**2) / info**2
    half = 1.96 * math.sqrt(var)
    return StrengthFit(a, half, sigma, bool(abs(a) < 3 * math.sqrt(var)))


@dataclass(frozen=True)
class EfficiencyFit:
    strength_fit: float
    eta_fit: float
    q_bar_fit: float
    phase_offset: float
    residual: float
    eta_halfwidth: float
    strength_halfwidth: float = float("nan")
    super_unity: bool = False
    label: str = ""


@dataclass(frozen=True, eq=False)
class LineCut:
    """Binned <x>_c and <y>_c along the I_m = 0 band, versus Q_m/sigma."""

    v: np.ndarray
    x: np.ndarray
    y: np.ndarray
    count_x: np.ndarray
    count_y: np.ndarray
    # bin averages of sech(u s) sin(v s) and sech(u s) cos(v s) over the shots
    sx: np.ndarray = field(repr=False, default=None)
    cx: np.ndarray = field(repr=False, default=None)
    sy: np.ndarray = field(repr=False, default=None)
    cy: np.ndarray = field(repr=False, default=None)


def line_cut(ds, strength, band=0.25, n_bins=32, extent=4.0, sigma=None):
    sigma = estimate_sigma(ds) if sigma is None else sigma
    u, v = ds.shots.i / sigma, ds.shots.q / sigma
    in_band = np.abs(u) < band
    edges = np.linspace(-extent, extent, n_bins + 1)
    out = {}
    for ax in ("x", "y"):
        sel = in_band & (ds.axis == ax)
        if np.count_nonzero(sel) < 10:
            raise InsufficientData(f"not enough {ax}-axis shots in the I_m = 0 band")
        sech = 1.0 / np.cosh(u[sel] * strength)
        idx = np.searchsorted(edges, v[sel], side="right") - 1
        ok = (idx >= 0) & (idx < n_bins)
        idx = idx[ok]
        cnt = np.bincount(idx, minlength=n_bins)
        def mean_of(vals):
            return np.bincount(idx, vals[ok], minlength=n_bins) / np.maximum(cnt, 1)
        out[ax] = (
            mean_of(v[sel]),
            mean_of(ds.outcome[sel].astype(float)),
            cnt,
            mean_of(sech * np.sin(v[sel] * strength)),
            mean_of(sech * np.cos(v[sel] * strength)),
        )
    keep = (out["x"][2] > 0) & (out["y"][2] > 0)
    vx = out["x"][0]
    return LineCut(
        vx[keep], out["x"][1][keep], out["y"][1][keep], out["x"][2][keep], out["y"][2][keep],
        out["x"][3][keep], out["x"][4][keep], out["y"][3][keep], out["y"][4][keep],
    )


def _envelope(eta, s):
    return math.exp(-(s**2) * (1.0 - eta) / eta)


def line_cut_model(cut, eta, psi, s):
    A = _envelope(eta, s)
    c, sn = math.cos(psi), math.sin(psi)
    mx = A * (cut.sx * c + cut.cx * sn)
    my = A * (cut.cy * c - cut.sy * sn)
    return mx, my


def _jacobian(cut, eta, psi, s):
    A = _envelope(eta, s)
    dA = A * s**2 / eta**2
    c, sn = math.cos(psi), math.sin(psi)
    bx, by = cut.sx * c + cut.cx * sn, cut.cy * c - cut.sy * sn
    dbx, dby = -cut.sx * sn + cut.cx * c, -cut.cy * sn - cut.sy * c
    return np.concatenate([dA * bx, dA * by]), np.concatenate([A * dbx, A * dby])


def fit_efficiency(ds, strength, band=0.25, n_bins=32, extent=4.0, max_iter=50):
    """Fit the x/y line cuts for the efficiency at fixed measurement strength.

    The phase offset ``psi = (Qbar Ibar/s^2)(1-eta)/eta`` is fitted jointly
    with ``eta``; ``Qbar`` is recovered from it when ``eta < 1``. A coarse
    scan over eta with ``psi = 0`` seeds a count-weighted Gauss-Newton
    refinement. Efficiencies above one are clipped to 1 and flagged.
    """
    if not strength > 0:
        raise InvalidArgument("strength must be > 0 to fit the efficiency")
    s = float(strength)
    sigma = estimate_sigma(ds)
    cut = line_cut(ds, s, band, n_bins, extent, sigma)
    data = np.concatenate([cut.x, cut.y])
    w = np.concatenate([cut.count_x, cut.count_y]).astype(float)

    def rss(eta, psi):
        mx, my = line_cut_model(cut, eta, psi, s)
        return float(np.sum(w * (data - np.concatenate([mx, my])) ** 2))

    coarse = np.linspace(0.01, 1.2, 120)
    eta = float(coarse[np.argmin([rss(e, 0.0) for e in coarse])])
    psi = 0.0
    for _ in range(max_iter):
        mx, my = line_cut_model(cut, eta, psi, s)
        res = data - np.concatenate([mx, my])
        J = np.column_stack(_jacobian(cut, eta, psi, s))
        JtW = J.T * w
        step = np.linalg.solve(JtW @ J, JtW @ res)
        lam = 1.0
        while lam > 1e-4 and (eta + lam * step[0] <= 0 or rss(eta + lam * step[0], psi + lam * step[1]) > rss(eta, psi)):
            lam *= 0.5
        eta, psi = eta + lam * step[0], psi + lam * step[1]
        if np.max(np.abs(lam * step)) < 1e-10:
            break

    J = np.column_stack(_jacobian(cut, eta, psi, s))
    mx, my = line_cut_model(cut, eta, psi, s)
    model = np.concatenate([mx, my])
    # binomial variance per shot is 1 - <c>^2
    meat = (J.T * (w * np.clip(1 - model**2, 0, 1))) @ J
    bread = np.linalg.inv((J.T * w) @ J)
    cov = bread @ meat @ bread
    half = 1.96 * math.sqrt(max(cov[0, 0], 0.0))
    residual = rss(eta, psi) / float(np.sum(w))

    super_unity = eta > 1.0
    eta_out = min(eta, 1.0)
    lost = (1 - eta_out) / eta_out
    q_bar = psi * sigma / (s * lost) if lost > 1e-9 else float("nan")
    return EfficiencyFit(s, eta_out, q_bar, psi, residual, half, super_unity=super_unity, label=ds.label)


@dataclass(frozen=True)
class CorrectedEfficiency:
    eta: float
    clipped: bool


def t2_corrected_eta(eta_fit, strength, t_window, t2):
    """Remove a ``exp(-t_window/t2)`` dephasing factor from a fitted envelope."""
    if not (eta_fit > 0 and strength > 0 and t_window >= 0 and t2 > 0):
        raise InvalidArgument("eta_fit, strength, t2 must be positive and t_window >= 0")
    s2 = strength**2
    exponent = s2 * (1 - eta_fit) / eta_fit - t_window / t2
    if exponent < 0:
        return CorrectedEfficiency(1.0, True)
    return CorrectedEfficiency(s2 / (s2 + exponent), False)


@dataclass(frozen=True, eq=False)
class NvrAnalysis:
    nvr_cs_db: float
    eta_overall_cs: float
    eta_out_cs: float
    eta_amp: float
    sigma_ratio_high: float
    sigma_ratio_low: float
    nvr_high: float
    nvr_low: float
    eta_high: float
    eta_low: float
    curves: dict = field(repr=False, default_factory=dict)

    @property
    def nvr_cs(self):
        return 10.0 ** (self.nvr_cs_db / 10.0)

    def consistency(self, eta_measured_high=REFERENCE_ETA["tms_high"], eta_measured_low=REFERENCE_ETA["tms_low"]):
        """Can output-chain noise alone account for measured High/Low efficiencies?

        Returns the amplifier efficiencies each measurement would require at
        this NVR, and the largest ratio ``eta_out^H / eta_out^L`` any NVR
        could produce for these noise ratios. If the measured ratio exceeds
        that bound, or the required amplifier efficiencies differ, a change
        of NVR cannot be the explanation.
        """
        need_h = eta_measured_high / (1 - 1 / self.nvr_high)
        need_l = eta_measured_low / (1 - 1 / self.nvr_low)
        # ratio of output efficiencies approaches (sigma_H/sigma_L)^2 as NVR -> 1
        bound = (self.sigma_ratio_high / self.sigma_ratio_low) ** 2
        measured_ratio = eta_measured_high / eta_measured_low
        explained = bool(abs(need_h - need_l) <= 0.02 and measured_ratio < bound)
        return {
            "eta_measured_high": eta_measured_high,
            "eta_measured_low": eta_measured_low,
            "eta_amp_required_high": need_h,
            "eta_amp_required_low": need_l,
            "measured_ratio": measured_ratio,
            "max_ratio_any_nvr": bound,
            "explained_by_nvr": explained,
            "statement": (
                "NVR changes alone can account for the measured efficiencies"
                if explained
                else "the measured High/Low efficiencies cannot be explained by NVR changes alone; "
                "the interferometer itself must have different efficiencies at the two points"
            ),
        }


def efficiency_vs_nvr(eta_amp, nvr_linear):
    return eta_amp * (1.0 - 1.0 / np.asarray(nvr_linear, dtype=float))


def nvr_analysis(nvr_cs_db, eta_overall_cs, sigma_ratio_high, sigma_ratio_low,
                 curve_eta_amps=(0.35, 0.45, 0.55), curve_nvr_db=None):
    """Propagate a measured CS+PP efficiency to the TMS High/Low points via NVR."""
    for name, v in (("sigma_ratio_high", sigma_ratio_high), ("sigma_ratio_low", sigma_ratio_low),
                    ("eta_overall_cs", eta_overall_cs)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive, got {v!r}")
    eta_out = nvr_to_eta_out(nvr_cs_db)
    if not eta_overall_cs < eta_out:
        raise InvalidArgument(
            f"overall efficiency {eta_overall_cs} must be below the output-chain efficiency {eta_out:.4f}"
        )
    nvr = 10.0 ** (nvr_cs_db / 10.0)
    eta_amp = eta_overall_cs / eta_out
    nvr_h = 1.0 + (nvr - 1.0) * sigma_ratio_high**2
    nvr_l = 1.0 + (nvr - 1.0) * sigma_ratio_low**2
    eta_h = eta_amp * (1.0 - 1.0 / nvr_h)
    eta_l = eta_amp * (1.0 - 1.0 / nvr_l)
    for name, v in (("eta_amp", eta_amp), ("eta_high", eta_h), ("eta_low", eta_l)):
        if not 0 < v < 1:
            raise InvalidArgument(f"derived {name} = {v:.4f} lies outside (0, 1)")

    grid_db = np.linspace(0.25, 12.0, 48) if curve_nvr_db is None else np.asarray(curve_nvr_db, float)
    grid = 10.0 ** (grid_db / 10.0)
    curves = {"nvr_db": grid_db, "nvr": grid}
    for ea in curve_eta_amps:
        curves[f"eta_amp_{ea:g}"] = efficiency_vs_nvr(ea, grid)
    return NvrAnalysis(nvr_cs_db, eta_overall_cs, eta_out, eta_amp, sigma_ratio_high, sigma_ratio_low,
                       nvr_h, nvr_l, eta_h, eta_l, curves)
