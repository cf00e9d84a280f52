"""Piecewise PBDW state estimation for 2D parametric incompressible flow."""
__version__ = "0.1.0"
