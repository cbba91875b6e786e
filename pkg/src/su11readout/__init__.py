"""Gaussian simulation of qubit readout through a two-mode-squeezed SU(1,1) interferometer."""

__version__ = "0.1.0"
