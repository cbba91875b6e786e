"""Device models: JPC gain, dispersive cavity phase, readout drive, output chain."""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

DEFAULT_DELTA_THETA = math.radians(40.0)


class QubitState(enum.Enum):
    g = "g"
    e = "e"

    @property
    def z(self):
        """Bloch z component; +1 for the ground state."""
        return 1 if self is QubitState.g else -1


class PhaseMode(str, enum.Enum):
    physical = "physical"
    calibrated = "calibrated"


def gain_db_to_r(gain_db):
    """Squeezing parameter of a phase-preserving amplifier with power gain ``gain_db``."""
    if not np.isfinite(gain_db) or gain_db < 0:
        raise InvalidArgument(f"gain must be a finite value >= 0 dB, got {gain_db!r}")
    return float(np.arccosh(np.sqrt(10.0 ** (gain_db / 10.0))))


def r_to_gain_db(r):
    return float(10.0 * np.log10(np.cosh(r) ** 2))


@dataclass(frozen=True)
class JpcParams:
    gain_db: float
    pump_phase: float = 0.0

    def __post_init__(self):
        gain_db_to_r(self.gain_db)

    @property
    def r(self):
        return gain_db_to_r(self.gain_db)

    @property
    def gain(self):
        return 10.0 ** (self.gain_db / 10.0)


@dataclass(frozen=True)
class CavityParams:
    """Single-port dispersive cavity seen in reflection.

    ``kappa``, ``chi`` and ``drive_detuning`` are angular frequencies (rad/s).
    In calibrated mode the reflection phases are fixed to ``theta_g = 0`` and
    ``theta_e = calibrated_delta_theta`` regardless of the frequencies.
    """

    kappa: float = 2 * math.pi * 9.9e6
    chi: float = 2 * math.pi * 2.2e6
    drive_detuning: float = 0.0
    phase_mode: PhaseMode = PhaseMode.calibrated
    calibrated_delta_theta: float = DEFAULT_DELTA_THETA

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidArgument(f"kappa must be > 0, got {self.kappa!r}")
        object.__setattr__(self, "phase_mode", PhaseMode(self.phase_mode))


@dataclass(frozen=True)
class OutputChainParams:
    """Output chain after the analyzer, described by its NVR at the CS+PP setting.

    ``nvr_db = inf`` is a noiseless chain.
    """

    nvr_db: float = 7.0
    include_heterodyne_penalty: bool = False

    def __post_init__(self):
        if not self.nvr_db > 0:
            raise InvalidArgument(f"NVR must be > 0 dB, got {self.nvr_db!r}")


def cavity_phase(cavity, qs):
    qs = QubitState(qs)
    if cavity.phase_mode is PhaseMode.calibrated:
        return 0.0 if qs is QubitState.g else float(cavity.calibrated_delta_theta)
    # g pulls the cavity up by +chi
    s = qs.z
    return float(-2.0 * math.atan2(2.0 * (cavity.drive_detuning - s * cavity.chi), cavity.kappa))


def nvr_to_eta_out(nvr_db):
    """Output-chain efficiency ``1 - 1/NVR``."""
    if not nvr_db > 0:
        raise InvalidArgument(f"NVR must exceed 0 dB for any information to reach the record, got {nvr_db!r}")
    return 1.0 - 10.0 ** (-nvr_db / 10.0)


def drive_displacement(amp, drive_phase, cavity, qs):
    """Field leaving the strong port when the weak port is driven with ``amp``."""
    if not amp >= 0:
        raise InvalidArgument(f"drive amplitude must be >= 0, got {amp!r}")
    return complex(amp * np.exp(1j * (drive_phase + cavity_phase(cavity, qs))))
