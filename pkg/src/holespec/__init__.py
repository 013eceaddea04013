"""Spectral hole burning simulation and analysis for Eu(III) hyperfine ensembles."""

__version__ = "0.1.0"
