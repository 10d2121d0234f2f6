"""Simulation and inference for lumped-element resonators coupled to spin ensembles."""

__version__ = "0.1.0"
