"""Marginal distribution model toolkit: consistency checks, prediction
intervals, best-fit limits and synthetic data for discrete choice data."""

__version__ = "0.1.0"
