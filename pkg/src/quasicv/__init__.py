"""Collective atomic spins as quasi-continuous variables: spin algebra, cavity
optics, interferometer networks and a pulse-sequence compiler."""

__version__ = "0.1.0"
