"""Quantum dynamical landscapes: simulation, Lie-Fourier analysis, surrogates and bounds."""

__version__ = "0.1.0"
