"""Experiment runners, plus the manifest-writing driver.

=====================  ===========================================================
experiment             output
=====================  ===========================================================
``noise-sweep``        normalized noise sigma vs relative pump phase per entangler gain
``qubit-noise-sweep``  sigma_g, sigma_e vs phase and the two matched points
``bullseye``           conditional <z> maps at the max-difference and matched phases
``snr-sweep``          normalized power SNR and signal vs phase per entangler gain
``sparam-sweep``       signal-to-signal gain S_aa vs phase
``backaction``         x/y/z conditional tomography, strength and efficiency fits
``nvr``                efficiency vs NVR curves and High/Low predictions
``calibrate``          loss calibration against measured noise ratios and SNR gain
=====================  ===========================================================
"""

import math
import os
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .backaction import (
    REFERENCE_ETA,
    BackactionParams,
    fit_efficiency,
    fit_strength_z,
    generate_tomography,
    line_cut,
    line_cut_model,
    nvr_analysis,
    t2_corrected_eta,
)
from .calibration import calibrate, readout_metrics
from .config import EXPERIMENTS, parse_config
from .devices import QubitState
from .errors import CalibrationFailed, ConfigError
from .interferometer import (
    OutputMoments,
    baseline_sigma,
    find_matched_points,
    output_covariances,
    phase_sweep,
    propagate,
    s_aa,
)
from .io import atomic_write, dumps_json, sha256_file, validate_table, write_shots_csv, write_table
from .readout import BinSpec, bullseye_map, conditional_map, error_rate, fit_moments, sample_mixture, sample_shots, snr
from .sampling import ordered_map

G, E = QubitState.g, QubitState.e


@dataclass
class Table:
    name: str
    columns: tuple
    rows: list


@dataclass
class ExperimentResult:
    tables: list
    summary: dict
    files: dict = field(default_factory=dict)


def _grid(cfg):
    n = cfg.run.grid_points
    return 2 * math.pi * np.arange(n) / n


def _stream(experiment, *parts):
    return (EXPERIMENTS.index(experiment), *parts)


def _mc_sigma(cov, n, seed, stream, workers=1):
    shots = sample_shots(OutputMoments(np.zeros(2), cov), n, seed, stream, workers=workers)
    return fit_moments(shots).sigma


def noise_sweep(cfg, workers):
    dev = cfg.device.interferometer()
    grid = _grid(cfg)
    rows, summary = [], {}
    for gi, ge in enumerate(cfg.sweep.entangler_gains_db):
        c = dev.replace(entangler_gain_db=ge)
        sw = phase_sweep(c, grid, record=True)
        if cfg.sweep.monte_carlo:
            covs = output_covariances(c, G, grid, record=True)
            base_cov = output_covariances(c.baseline(), G, [0.0], record=True)[0]
            mc_base = _mc_sigma(base_cov, cfg.run.shots, cfg.run.seed, _stream("noise-sweep", gi, 1, 0))
            mc = ordered_map(
                lambda k: _mc_sigma(covs[k], cfg.run.shots, cfg.run.seed, _stream("noise-sweep", gi, 0, k)),
                range(len(grid)), workers,
            )
            mc = np.asarray(mc) / mc_base
        else:
            mc = np.full(len(grid), np.nan)
        norm = sw.sigma_normalized_g
        for k in range(len(grid)):
            rows.append((ge, math.degrees(grid[k]), sw.sigma_g[k], norm[k], mc[k]))
        summary[f"{ge:g}"] = {
            "min_normalized_sigma": float(norm.min()),
            "max_normalized_sigma": float(norm.max()),
            "delta_phi_deg_at_min": math.degrees(grid[int(np.argmin(norm))]),
        }
    cols = ("entangler_gain_db", "delta_phi_deg", "sigma", "sigma_normalized", "sigma_normalized_mc")
    return ExperimentResult([Table("noise_sweep", cols, rows)], {"per_gain": summary})


def qubit_noise_sweep(cfg, workers):
    dev = cfg.device.interferometer().replace(entangler_gain_db=cfg.bullseye.entangler_gain_db)
    grid = _grid(cfg)
    sw = phase_sweep(dev, grid, record=True)
    mp = find_matched_points(dev, record=True)
    if cfg.sweep.monte_carlo:
        base = output_covariances(dev.baseline(), G, [0.0])[0]
        mc_base = _mc_sigma(base, cfg.run.shots, cfg.run.seed, _stream("qubit-noise-sweep", 2, 0))
        per_state = []
        for si, qs in enumerate((G, E)):
            covs = output_covariances(dev, qs, grid, record=True)
            per_state.append(np.asarray(ordered_map(
                lambda k: _mc_sigma(covs[k], cfg.run.shots, cfg.run.seed, _stream("qubit-noise-sweep", si, k)),
                range(len(grid)), workers)) / mc_base)
        mc_g, mc_e = per_state
    else:
        mc_g = mc_e = np.full(len(grid), np.nan)
    rows = [
        (math.degrees(grid[k]), sw.sigma_g[k], sw.sigma_e[k], sw.sigma_normalized_g[k], sw.sigma_normalized_e[k],
         mc_g[k], mc_e[k])
        for k in range(len(grid))
    ]
    cols = ("delta_phi_deg", "sigma_g", "sigma_e", "sigma_normalized_g", "sigma_normalized_e",
            "sigma_normalized_g_mc", "sigma_normalized_e_mc")
    summary = {
        "entangler_gain_db": dev.entangler_gain_db,
        "delta_theta_deg": math.degrees(dev.delta_theta),
        "matched_high_deg": math.degrees(mp.delta_phi_high),
        "matched_low_deg": math.degrees(mp.delta_phi_low),
        "matched_separation_deg": math.degrees(mp.separation),
        "sigma_ratio_high": mp.sigma_high / sw.sigma_baseline,
        "sigma_ratio_low": mp.sigma_low / sw.sigma_baseline,
    }
    return ExperimentResult([Table("qubit_noise_sweep", cols, rows)], summary)


def max_difference_phases(config, n=720):
    """Phases where sigma_e^2 - sigma_g^2 is largest and most negative."""
    grid = 2 * math.pi * np.arange(n) / n
    vg = np.trace(output_covariances(config, G, grid), axis1=1, axis2=2)
    ve = np.trace(output_covariances(config, E, grid), axis1=1, axis2=2)
    d = ve - vg
    return float(grid[int(np.argmax(d))]), float(grid[int(np.argmin(d))])


def bullseye(cfg, workers):
    dev = cfg.device.interferometer().replace(entangler_gain_db=cfg.bullseye.entangler_gain_db)
    mp = find_matched_points(dev, record=True)
    e_louder, g_louder = max_difference_phases(dev)
    settings = [("e_louder", e_louder), ("g_louder", g_louder),
                ("tms_high", mp.delta_phi_high), ("tms_low", mp.delta_phi_low)]
    bins = BinSpec(cfg.bullseye.bins, cfg.bullseye.extent_sigma, baseline_sigma(dev, record=True))
    tables, summary = [], {}
    for k, (label, phi) in enumerate(settings):
        c = dev.replace(delta_phi=phi)
        mg, me = propagate(c, G, record=True), propagate(c, E, record=True)
        shots = sample_mixture(mg, me, cfg.run.shots, cfg.run.seed, _stream("bullseye", k), label, workers)
        fg = fit_moments(shots.records[shots.outcome == 1])
        fe = fit_moments(shots.records[shots.outcome == -1])
        model = bullseye_map(mg, me, shots, bins)
        fitted = bullseye_map(fg, fe, shots, bins)
        emp = conditional_map(shots, bins, "z")
        rows = [
            (ci, cq, zm, zf, ze, n)
            for (ci, cq, zm, n), (_, _, zf, _), (_, _, ze, _) in zip(model.rows(), fitted.rows(), emp.rows())
        ]
        tables.append(Table(f"bullseye_{label}", ("i_over_sigma", "q_over_sigma", "z_model", "z_fitted",
                                                  "z_empirical", "count"), rows))
        populated = model.counts > 0
        summary[label] = {
            "delta_phi_deg": math.degrees(phi),
            "sigma_g": mg.sigma,
            "sigma_e": me.sigma,
            "max_abs_z_model": float(np.nanmax(np.abs(model.values))),
            "max_abs_z_fitted": float(np.nanmax(np.abs(fitted.values[populated]))),
            "total_count": int(model.counts.sum()),
        }
    return ExperimentResult(tables, summary)


def _moment_pair(config, drive_amp, drive_phase):
    mg = propagate(config, G, drive_amp, drive_phase, record=True)
    me = propagate(config, E, drive_amp, drive_phase, record=True)
    return mg, me


def _calibrated_device(cfg, dev):
    result = calibrate(dev, cfg.calibrate.targets(), cfg.calibrate.free, cfg.calibrate.loss_ratio,
                       cfg.calibrate.threshold)
    return result.config, result.report()


def snr_sweep(cfg, workers):
    dev = cfg.device.interferometer()
    summary = {}
    gains = [(f"{g:g}", g) for g in cfg.sweep.entangler_gains_db]
    if cfg.sweep.calibrate_first:
        dev, report = _calibrated_device(cfg, dev)
        summary["calibration"] = report
        gains.append(("calibrated", dev.entangler_gain_db))
    amp, ph = cfg.device.drive_amplitude, math.radians(cfg.device.drive_phase_deg)
    base_g, base_e = _moment_pair(dev.baseline(), amp, ph)
    base_snr = snr(base_g, base_e).snr
    base_sep = float(np.hypot(*(base_g.mean - base_e.mean)))
    n, seed = cfg.run.shots, cfg.run.seed
    if cfg.sweep.monte_carlo:
        fb_g = fit_moments(sample_shots(base_g, n, seed, _stream("snr-sweep", 0, 0, 0), workers=workers))
        fb_e = fit_moments(sample_shots(base_e, n, seed, _stream("snr-sweep", 0, 0, 1), workers=workers))
        base_mc = snr(fb_g, fb_e).snr
    grid = _grid(cfg)
    rows = []
    per_gain = {}
    for gi, (label, ge) in enumerate(gains, start=1):
        c0 = dev.replace(entangler_gain_db=ge)

        def point(k):
            c = c0.replace(delta_phi=grid[k])
            mg, me = _moment_pair(c, amp, ph)
            analytic = snr(mg, me, base_snr)
            sep = float(np.hypot(*(mg.mean - me.mean))) / base_sep
            if cfg.sweep.monte_carlo:
                fg = fit_moments(sample_shots(mg, n, seed, _stream("snr-sweep", gi, k, 0)))
                fe = fit_moments(sample_shots(me, n, seed, _stream("snr-sweep", gi, k, 1)))
                mc = snr(fg, fe, base_mc).normalized
            else:
                mc = float("nan")
            sig_mag = float(np.hypot(*mg.mean)) / float(np.hypot(*base_g.mean))
            return analytic.snr, analytic.normalized, mc, sep, sig_mag

        pts = ordered_map(point, range(len(grid)), workers)
        for k, (s_abs, s_norm, s_mc, sep, sig_mag) in enumerate(pts):
            rows.append((label, ge, math.degrees(grid[k]), s_abs, s_norm, s_mc, sep, sig_mag))
        norm = np.array([p[1] for p in pts])
        entry = {
            "entangler_gain_db": ge,
            "max_normalized_snr": float(norm.max()),
            "delta_phi_deg_at_max": math.degrees(grid[int(np.argmax(norm))]),
            "signal_variation": float(np.ptp([p[4] for p in pts])),
        }
        if cfg.sweep.monte_carlo:
            entry["max_normalized_snr_mc"] = float(np.nanmax([p[2] for p in pts]))
        if ge > 0:
            try:
                m = readout_metrics(c0, amp, ph)
                entry["low_match_snr_gain"] = m["snr_gain"]
                entry["high_match_snr_gain"] = m["snr_gain_high"]
                entry["low_match_deg"] = math.degrees(m["delta_phi_low"])
            except Exception as exc:  # matched points may not exist for this gain
                entry["low_match_error"] = str(exc)
        per_gain[label] = entry
    summary["per_gain"] = per_gain
    summary["baseline_snr"] = base_snr
    summary["baseline_error_rate"] = error_rate(base_snr)
    if "calibrated" in per_gain and "low_match_snr_gain" in per_gain["calibrated"]:
        gain = per_gain["calibrated"]["low_match_snr_gain"]
        summary["max_normalized_snr"] = per_gain["calibrated"]["max_normalized_snr"]
        summary["low_match_snr_gain"] = gain
        summary["low_match_error_rate"] = error_rate(base_snr * gain)
    cols = ("gain_label", "entangler_gain_db", "delta_phi_deg", "snr", "snr_normalized", "snr_normalized_mc",
            "separation_normalized", "signal_normalized")
    return ExperimentResult([Table("snr_sweep", cols, rows)], summary)


def sparam_sweep(cfg, workers):
    dev = cfg.device.interferometer().replace(analyzer_gain_db=cfg.sweep.sparam_analyzer_gain_db)
    grid = _grid(cfg)
    rows, summary = [], {}
    for ge in cfg.sweep.sparam_entangler_gains_db:
        gains_db = []
        for phi in grid:
            c = dev.replace(entangler_gain_db=ge, delta_phi=phi)
            s = s_aa(c, G)
            out = propagate(c, G, input_displacement=1.0)
            prop = float(np.hypot(*out.mean)) / math.sqrt(2)
            gains_db.append(20 * math.log10(abs(s)))
            rows.append((ge, math.degrees(phi), s.real, s.imag, 20 * math.log10(abs(s)), 20 * math.log10(prop)))
        summary[f"{ge:g}"] = {"max_db": max(gains_db), "min_db": min(gains_db)}
    cols = ("entangler_gain_db", "delta_phi_deg", "s_aa_re", "s_aa_im", "s_aa_db", "propagated_db")
    return ExperimentResult([Table("sparam_sweep", cols, rows)],
                            {"analyzer_gain_db": dev.analyzer_gain_db, "per_gain": summary})


def backaction(cfg, workers):
    b = cfg.backaction
    if len(b.labels) != len(b.etas):
        raise ConfigError("backaction.labels and backaction.etas must have the same length")
    t_window = cfg.device.t_window_ns * 1e-9
    t2 = cfg.device.t2r_us * 1e-6
    tables, summary, files = [], {"strength": b.strength, "fits": {}}, {}
    for k, (label, eta) in enumerate(zip(b.labels, b.etas)):
        p = BackactionParams.from_strength(b.strength, eta, q_bar=b.q_bar_sigma)
        ds = generate_tomography(p, b.shots, cfg.run.seed, t_window if b.dephasing else 0.0, t2,
                                 _stream("backaction", k), label, workers)
        sf = fit_strength_z(ds)
        ef = fit_efficiency(ds, sf.strength, band=b.band_sigma)
        cor = t2_corrected_eta(ef.eta_fit, sf.strength, t_window, t2)

        cut = line_cut(ds, sf.strength, band=b.band_sigma)
        mx, my = line_cut_model(cut, ef.eta_fit, ef.phase_offset, sf.strength)
        tables.append(Table(f"linecut_{label}", ("q_over_sigma", "x", "y", "count_x", "count_y", "x_model", "y_model"),
                            list(zip(cut.v, cut.x, cut.y, cut.count_x, cut.count_y, mx, my))))

        sigma = sf.sigma
        bins = BinSpec(b.map_bins, b.map_extent_sigma, sigma)
        maps = {ax: conditional_map(ds.shots, bins, ax) for ax in ("x", "y", "z")}
        rows = [
            (ci, cq, vx, vy, vz, nx + ny + nz)
            for (ci, cq, vx, nx), (_, _, vy, ny), (_, _, vz, nz)
            in zip(maps["x"].rows(), maps["y"].rows(), maps["z"].rows())
        ]
        tables.append(Table(f"tomography_map_{label}",
                            ("i_over_sigma", "q_over_sigma", "x", "y", "z", "count"), rows))

        zsel = ds.axis == "z"
        u = ds.shots.i[zsel] / sigma
        edges = np.linspace(-4, 4, 33)
        idx = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, 31)
        cnt = np.bincount(idx, minlength=32)
        zsum = np.bincount(idx, ds.outcome[zsel].astype(float), minlength=32)
        usum = np.bincount(idx, u, minlength=32)
        zrows = []
        for j in range(32):
            if cnt[j]:
                um, zm = usum[j] / cnt[j], zsum[j] / cnt[j]
                zrows.append((um, zm, int(cnt[j]), math.tanh(sf.strength * um)))
        tables.append(Table(f"zcut_{label}", ("i_over_sigma", "z", "count", "z_model"), zrows))

        if b.save_shots:
            files[f"shots_{label}.csv"] = ds.shots
        summary["fits"][label] = {
            "eta_generated": eta,
            "strength_fit": sf.strength,
            "strength_halfwidth": sf.halfwidth,
            "eta_fit": ef.eta_fit,
            "eta_halfwidth": ef.eta_halfwidth,
            "q_bar_fit": ef.q_bar_fit,
            "super_unity": ef.super_unity,
            "residual": ef.residual,
            "eta_t2_corrected": cor.eta,
            "t2_correction_clipped": cor.clipped,
        }
    summary["reference_eta"] = REFERENCE_ETA
    summary["note"] = ("all datasets are fitted with the coherent-state back-action model; "
                       "labels other than 'cs' are synthetic stand-ins for the TMS settings")
    return ExperimentResult(tables, summary, files)


def nvr(cfg, workers):
    n = cfg.nvr
    a = nvr_analysis(n.nvr_db, n.eta_overall_cs, n.sigma_ratio_high, n.sigma_ratio_low, n.eta_amp_curves)
    consistency = a.consistency(n.eta_measured_high, n.eta_measured_low)
    curve_cols = tuple(a.curves)
    curve_rows = list(zip(*(a.curves[c] for c in curve_cols)))
    points = [
        ("cs", 1.0, a.nvr_cs, a.eta_overall_cs, a.eta_overall_cs),
        ("tms_high", a.sigma_ratio_high, a.nvr_high, a.eta_high, n.eta_measured_high),
        ("tms_low", a.sigma_ratio_low, a.nvr_low, a.eta_low, n.eta_measured_low),
    ]
    summary = {
        "nvr_cs_db": a.nvr_cs_db,
        "eta_out_cs": a.eta_out_cs,
        "eta_amp": a.eta_amp,
        "nvr_high": a.nvr_high,
        "nvr_low": a.nvr_low,
        "eta_high_predicted": a.eta_high,
        "eta_low_predicted": a.eta_low,
        "consistency": consistency,
    }
    return ExperimentResult(
        [Table("nvr_curves", curve_cols, curve_rows),
         Table("nvr_points", ("setting", "sigma_ratio", "nvr", "eta_predicted", "eta_measured"), points)],
        summary,
    )


def calibrate_experiment(cfg, workers):
    dev = cfg.device.interferometer()
    dev, report = _calibrated_device(cfg, dev)
    grid = _grid(cfg)
    sw = phase_sweep(dev, grid, record=True)
    amp, ph = cfg.device.drive_amplitude, math.radians(cfg.device.drive_phase_deg)
    base = snr(*_moment_pair(dev.baseline(), amp, ph)).snr
    rows = []
    for k, phi in enumerate(grid):
        s = snr(*_moment_pair(dev.replace(delta_phi=phi), amp, ph), base)
        rows.append((math.degrees(phi), sw.sigma_normalized_g[k], sw.sigma_normalized_e[k], s.normalized))
    report["device"] = {
        "entangler_gain_db": dev.entangler_gain_db,
        "eta_upper": dev.eta_upper,
        "eta_lower": dev.eta_lower,
        "analyzer_efficiency": dev.analyzer_efficiency,
        "delta_theta_deg": math.degrees(dev.delta_theta),
    }
    cols = ("delta_phi_deg", "sigma_normalized_g", "sigma_normalized_e", "snr_normalized")
    return ExperimentResult([Table("calibrated_sweep", cols, rows)], report)


RUNNERS = {
    "noise-sweep": noise_sweep,
    "qubit-noise-sweep": qubit_noise_sweep,
    "bullseye": bullseye,
    "snr-sweep": snr_sweep,
    "sparam-sweep": sparam_sweep,
    "backaction": backaction,
    "nvr": nvr,
    "calibrate": calibrate_experiment,
}


def run(cfg, out_dir, experiment=None, workers=None):
    """Run one experiment, write its tables, summary and manifest; return the manifest.

    ``workers`` overrides ``cfg.run.workers`` without entering the manifest's
    config, since outputs do not depend on it.
    """
    experiment = experiment or cfg.experiment
    if experiment not in RUNNERS:
        raise ConfigError(f"unknown or missing experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = cfg.model_copy(update={"experiment": experiment}, deep=True)
    workers = cfg.run.workers if workers is None else workers
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    fmt = cfg.run.format
    try:
        result = RUNNERS[experiment](cfg, workers)
    except CalibrationFailed as exc:
        atomic_write(os.path.join(out_dir, "calibration_report.json"), dumps_json(exc.report))
        raise

    written = []
    for t in result.tables:
        path = os.path.join(out_dir, f"{t.name}.{fmt}")
        write_table(path, t.columns, t.rows, fmt)
        validate_table(path, t.columns, len(t.rows), fmt)
        written.append(path)
    for name, shots in result.files.items():
        path = os.path.join(out_dir, name)
        cols = write_shots_csv(path, shots)
        validate_table(path, cols, len(shots))
        written.append(path)
    summary_path = os.path.join(out_dir, "summary.json")
    atomic_write(summary_path, dumps_json({"experiment": experiment, **result.summary}))
    written.append(summary_path)

    manifest = {
        "tool": "su11readout",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "experiment": experiment,
        "seed": cfg.run.seed,
        "workers": workers,
        "config": cfg.model_dump(mode="json"),
        "started_utc": started.isoformat(),
        "wall_clock_s": time.perf_counter() - t0,
        "outputs": {os.path.basename(p): sha256_file(p) for p in written},
    }
    atomic_write(os.path.join(out_dir, "manifest.json"), dumps_json(manifest))
    return manifest


def config_from_manifest(manifest):
    return parse_config(manifest["config"], source="manifest")
