"""Numerical laboratory for reactive fronts, convection, Euler/Navier-Stokes
flows and Littlewood-Paley spectra."""

__version__ = "0.1.0"
