"""Simulation and Monte-Carlo experiments for the 1-D stochastic heat equation
du = (1/2) u'' dt + sigma(u) xi, with closed-form bounds and kernel identities."""

from .grid import Grid, GridError
from .noise import NoiseSpec, sample_noise
from .profiles import (INFINITE_INDEX, InitialProfile, SplicedProfile, ZeroProfile, make_bump,
                       make_constant, make_lambda, make_table)
from .solver import SigmaFn, SolutionField, localized_picard, picard_iterate, solve

__version__ = "0.1.0"

__all__ = [
    "Grid", "GridError", "NoiseSpec", "sample_noise", "INFINITE_INDEX", "InitialProfile",
    "SplicedProfile", "ZeroProfile", "make_bump", "make_constant", "make_lambda", "make_table",
    "SigmaFn", "SolutionField", "localized_picard", "picard_iterate", "solve",
]
