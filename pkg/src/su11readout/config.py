"""Experiment configuration files.

Configs are TOML with one table per concern. Every key has a default (see
``data/default_config.toml``), physical quantities carry their unit in the
key name, and unknown keys are rejected.
"""

import math
import re
from importlib import resources
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .devices import CavityParams, OutputChainParams, PhaseMode
from .errors import ConfigError
from .interferometer import InterferometerConfig

EXPERIMENTS = (
    "noise-sweep",
    "qubit-noise-sweep",
    "bullseye",
    "snr-sweep",
    "sparam-sweep",
    "backaction",
    "nvr",
    "calibrate",
)

MHZ = 2 * math.pi * 1e6


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class RunSection(_Section):
    seed: int = Field(20201, ge=0, lt=2**64)
    shots: int = Field(50000, ge=1, description="shots per state and setting")
    workers: int = Field(0, ge=0, description="0 uses every available core")
    grid_points: int = Field(72, ge=2, description="relative pump phase points over one period")
    format: Literal["csv", "json"] = "csv"


class DeviceSection(_Section):
    entangler_gain_db: float = Field(2.0, ge=0)
    analyzer_gain_db: float = Field(20.0, ge=0)
    entangler_pump_phase_deg: float = 0.0
    delta_phi_deg: float = 180.0
    eta_upper: float = Field(0.729, ge=0, le=1)
    eta_lower: float = Field(0.81, ge=0, le=1)
    eta_post_cavity: float = Field(1.0, ge=0, le=1)
    analyzer_efficiency: float = Field(1.0, ge=0, le=1)
    input_occupation: float = Field(0.0, ge=0)
    phase_mode: Literal["calibrated", "physical"] = "calibrated"
    delta_theta_deg: float = 40.0
    cavity_freq_ghz: float = Field(7.447, gt=0)
    kappa_mhz: float = Field(9.9, gt=0, description="kappa / 2pi")
    chi_mhz: float = Field(2.2, description="chi / 2pi")
    drive_detuning_mhz: float = 0.0
    q_strong: float = Field(752.0, gt=0)
    t1_us: float = Field(18.2, gt=0)
    t2r_us: float = Field(4.4, gt=0)
    t2e_us: float = Field(4.6, gt=0)
    t_window_ns: float = Field(660.0, ge=0)
    nvr_db: float = Field(7.0, gt=0)
    heterodyne_penalty: bool = False
    signal_scale: float = Field(1.0, gt=0)
    drive_amplitude: float = Field(5.0, ge=0)
    drive_phase_deg: float = 0.0

    def interferometer(self):
        cavity = CavityParams(
            kappa=self.kappa_mhz * MHZ,
            chi=self.chi_mhz * MHZ,
            drive_detuning=self.drive_detuning_mhz * MHZ,
            phase_mode=PhaseMode(self.phase_mode),
            calibrated_delta_theta=math.radians(self.delta_theta_deg),
        )
        return InterferometerConfig(
            entangler_gain_db=self.entangler_gain_db,
            analyzer_gain_db=self.analyzer_gain_db,
            entangler_phase=math.radians(self.entangler_pump_phase_deg),
            delta_phi=math.radians(self.delta_phi_deg),
            eta_upper=self.eta_upper,
            eta_lower=self.eta_lower,
            eta_post_cavity=self.eta_post_cavity,
            analyzer_efficiency=self.analyzer_efficiency,
            cavity=cavity,
            input_occupation=self.input_occupation,
            chain=OutputChainParams(self.nvr_db, self.heterodyne_penalty),
            signal_scale=self.signal_scale,
        )


class SweepSection(_Section):
    entangler_gains_db: List[float] = [0.0, 0.5, 1.0, 1.5, 2.0, 4.0]
    monte_carlo: bool = True
    sparam_analyzer_gain_db: float = Field(10.0, ge=0)
    sparam_entangler_gains_db: List[float] = [0.67, 9.15]
    calibrate_first: bool = Field(True, description="snr-sweep: calibrate losses before sweeping")


class BullseyeSection(_Section):
    entangler_gain_db: float = Field(2.0, ge=0)
    bins: int = Field(51, ge=3)
    extent_sigma: float = Field(5.0, gt=0)


class BackactionSection(_Section):
    shots: int = Field(1_000_000, ge=1)
    strength: float = Field(0.66, gt=0)
    etas: List[float] = [0.46, 0.58, 0.29]
    labels: List[str] = ["cs", "tms_high", "tms_low"]
    q_bar_sigma: float = 0.0
    dephasing: bool = Field(False, description="multiply x/y by exp(-t_window/T2R) in synthesis")
    band_sigma: float = Field(0.25, gt=0)
    map_bins: int = Field(25, ge=3)
    map_extent_sigma: float = Field(3.0, gt=0)
    save_shots: bool = False


class NvrSection(_Section):
    nvr_db: float = Field(7.0, gt=0)
    eta_overall_cs: float = Field(0.46, gt=0, lt=1)
    sigma_ratio_high: float = Field(1.21, gt=0)
    sigma_ratio_low: float = Field(0.86, gt=0)
    eta_measured_high: float = Field(0.58, gt=0, le=1)
    eta_measured_low: float = Field(0.29, gt=0, le=1)
    eta_amp_curves: List[float] = [0.35, 0.45, 0.55]


class CalibrateSection(_Section):
    sigma_ratio_high: Optional[float] = 1.21
    sigma_ratio_low: Optional[float] = 0.86
    snr_gain: Optional[float] = 1.44
    delta_theta_deg: Optional[float] = 40.0
    free: List[Literal["entangler_gain_db", "eta_lower", "analyzer_efficiency"]] = [
        "entangler_gain_db", "eta_lower", "analyzer_efficiency",
    ]
    loss_ratio: float = Field(0.9, gt=0, le=1)
    threshold: float = Field(0.05, gt=0)

    def targets(self):
        t = {k: getattr(self, k) for k in ("sigma_ratio_high", "sigma_ratio_low", "snr_gain")
             if getattr(self, k) is not None}
        if self.delta_theta_deg is not None:
            t["delta_theta"] = math.radians(self.delta_theta_deg)
        return t


class ExperimentConfig(_Section):
    experiment: Optional[Literal[EXPERIMENTS]] = None
    run: RunSection = RunSection()
    device: DeviceSection = DeviceSection()
    sweep: SweepSection = SweepSection()
    bullseye: BullseyeSection = BullseyeSection()
    backaction: BackactionSection = BackactionSection()
    nvr: NvrSection = NvrSection()
    calibrate: CalibrateSection = CalibrateSection()


def _line_of(text, loc):
    """Best-effort line number of a dotted key in TOML source."""
    if not text:
        return None
    lines = text.splitlines()
    section, key = (loc[0], loc[1]) if len(loc) > 1 else (None, loc[0])
    start = 0
    if section is not None:
        for n, line in enumerate(lines):
            if re.match(rf"\s*\[\s*{re.escape(str(section))}\s*\]", line):
                start = n + 1
                break
        else:
            return None
    for n in range(start, len(lines)):
        if re.match(r"\s*\[", lines[n]) and section is not None:
            break
        if re.match(rf"\s*{re.escape(str(key))}\s*=", lines[n]):
            return n + 1
    return start or None


def parse_config(data, text=None, source="<config>"):
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = tuple(str(p) for p in err["loc"])
            line = _line_of(text, loc)
            where = f"{source}:{line}" if line else source
            msgs.append(f"{where}: {'.'.join(loc)}: {err['msg']}")
        raise ConfigError("invalid configuration\n  " + "\n  ".join(msgs)) from None


def load_config(path=None):
    """Read and validate a TOML config; ``None`` gives all defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, text, str(path))


def default_config_text():
    return resources.files("su11readout").joinpath("data/default_config.toml").read_text()
