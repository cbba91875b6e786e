"""Exception hierarchy shared by the simulator and the command line runner."""


class Su11Error(Exception):
    """Base class for all errors raised by su11readout."""

    exit_code = 3


class InvalidArgument(Su11Error, ValueError):
    exit_code = 3


class InsufficientData(Su11Error):
    exit_code = 3


class PhysicalityError(Su11Error):
    """A covariance matrix violates the uncertainty relation."""

    exit_code = 3


class DegenerateConfig(Su11Error):
    exit_code = 3


class AmbiguousRoots(Su11Error):
    exit_code = 3


class InternalConsistencyError(Su11Error):
    exit_code = 3


class ConfigError(Su11Error):
    exit_code = 2


class CalibrationFailed(Su11Error):
    exit_code = 4

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}
