"""Tune unmeasured loss parameters so the model matches measured readout metrics."""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .devices import CavityParams, PhaseMode, QubitState
from .errors import CalibrationFailed, InvalidArgument, Su11Error
from .interferometer import baseline_sigma, find_matched_points, propagate
from .readout import snr

DEFAULT_TARGETS = {
    "sigma_ratio_high": 1.21,
    "sigma_ratio_low": 0.86,
    "snr_gain": 1.44,
    "delta_theta": math.radians(40.0),
}

# name -> (lower, upper) bounds
FREE_PARAMETERS = {
    "entangler_gain_db": (0.01, 6.0),
    "eta_lower": (0.05, 1.0),
    "analyzer_efficiency": (0.05, 1.0),
}


def with_parameters(config, values, loss_ratio):
    changes = dict(values)
    if "eta_lower" in changes and loss_ratio is not None:
        changes["eta_upper"] = loss_ratio * changes["eta_lower"]
    return config.replace(**changes)


def readout_metrics(config, drive_amp=1.0, drive_phase=0.0):
    """Record-referred noise ratios and SNR gain at the matched points.

    ``snr_gain`` is the power SNR at the low-match phase divided by the
    CS+PP SNR of the same device with the entangler off.
    """
    mp = find_matched_points(config, record=True)
    s_cs = baseline_sigma(config, record=True)

    def power_snr(cfg):
        mg = propagate(cfg, QubitState.g, drive_amp, drive_phase, record=True)
        me = propagate(cfg, QubitState.e, drive_amp, drive_phase, record=True)
        return snr(mg, me).snr

    low = config.replace(delta_phi=mp.delta_phi_low)
    high = config.replace(delta_phi=mp.delta_phi_high)
    base = power_snr(config.baseline())
    return {
        "sigma_ratio_high": mp.sigma_high / s_cs,
        "sigma_ratio_low": mp.sigma_low / s_cs,
        "snr_gain": power_snr(low) / base,
        "snr_gain_high": power_snr(high) / base,
        "delta_theta": config.delta_theta,
        "delta_phi_high": mp.delta_phi_high,
        "delta_phi_low": mp.delta_phi_low,
    }


@dataclass(frozen=True)
class CalibrationResult:
    config: object
    parameters: dict
    metrics: dict
    residuals: dict
    reachable: dict
    success: bool
    n_evaluations: int
    targets: dict = field(default_factory=dict)

    def report(self):
        return {
            "success": self.success,
            "parameters": self.parameters,
            "eta_upper": self.config.eta_upper,
            "eta_lower": self.config.eta_lower,
            "targets": self.targets,
            "achieved": {k: self.metrics[k] for k in self.targets},
            "relative_residuals": self.residuals,
            "reachable": self.reachable,
            "delta_phi_high": self.metrics.get("delta_phi_high"),
            "delta_phi_low": self.metrics.get("delta_phi_low"),
            "n_evaluations": self.n_evaluations,
        }


def calibrate(config, targets=None, free=tuple(FREE_PARAMETERS), loss_ratio=0.9, threshold=0.05,
              scan_points=5):
    """Fit the free device parameters to the requested targets.

    Minimizes the sum of squared relative target errors with Nelder-Mead,
    started from the best point of a coarse grid over the bounds; the same
    grid tells whether each target lies within the reachable range. The
    upper-arm transmission is tied to ``loss_ratio * eta_lower``. A
    ``delta_theta`` target puts the cavity in calibrated mode at that phase.

    Raises :class:`CalibrationFailed` when any relative residual exceeds
    ``threshold``.
    """
    targets = dict(DEFAULT_TARGETS if targets is None else targets)
    unknown = set(targets) - set(DEFAULT_TARGETS)
    if unknown:
        raise InvalidArgument(f"unknown calibration targets {sorted(unknown)}")
    free = tuple(free)
    bad = set(free) - set(FREE_PARAMETERS)
    if bad or not free:
        raise InvalidArgument(f"free parameters must be a non-empty subset of {sorted(FREE_PARAMETERS)}")

    if "delta_theta" in targets:
        config = config.replace(cavity=CavityParams(
            config.cavity.kappa, config.cavity.chi, config.cavity.drive_detuning,
            PhaseMode.calibrated, targets["delta_theta"],
        ))
    if "eta_lower" not in free and loss_ratio is not None:
        config = config.replace(eta_upper=loss_ratio * config.eta_lower)
    fitted = [k for k in targets if k != "delta_theta"]
    bounds = [FREE_PARAMETERS[k] for k in free]
    n_eval = 0

    def metrics_at(x):
        nonlocal n_eval
        n_eval += 1
        values = {k: float(np.clip(v, *FREE_PARAMETERS[k])) for k, v in zip(free, x)}
        try:
            return readout_metrics(with_parameters(config, values, loss_ratio))
        except Su11Error:
            return None

    def cost(x):
        m = metrics_at(x)
        if m is None:
            return 1e6
        return sum((m[k] / targets[k] - 1.0) ** 2 for k in fitted)

    axes = [np.linspace(lo, hi, scan_points) for lo, hi in bounds]
    scanned = []
    for x in itertools.product(*axes):
        m = metrics_at(x)
        if m is not None:
            scanned.append((x, m))
    if not scanned:
        raise CalibrationFailed("no point of the parameter scan gives two matched points")
    reachable = {}
    for k in fitted:
        vals = [m[k] for _, m in scanned]
        reachable[k] = bool(min(vals) * (1 - threshold) <= targets[k] <= max(vals) * (1 + threshold))
    x0 = min(scanned, key=lambda xm: sum((xm[1][k] / targets[k] - 1.0) ** 2 for k in fitted))[0]

    if fitted:
        opt = minimize(cost, np.asarray(x0, float), method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000})
        x = opt.x
    else:
        x = np.asarray(x0, float)
    params = {k: float(np.clip(v, *FREE_PARAMETERS[k])) for k, v in zip(free, x)}
    final = with_parameters(config, params, loss_ratio)
    m = readout_metrics(final)
    residuals = {k: m[k] / targets[k] - 1.0 for k in targets}
    success = all(abs(r) <= threshold for r in residuals.values())
    result = CalibrationResult(final, params, m, residuals, reachable, success, n_eval, targets)
    if not success:
        misses = ", ".join(f"{k}: got {m[k]:.4g} for {targets[k]:.4g}" for k, r in residuals.items()
                           if abs(r) > threshold)
        raise CalibrationFailed(f"calibration failed ({misses})", result.report())
    return result
