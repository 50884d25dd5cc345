"""Energy-based stochastic state reduction: closed-form filtering solutions,
an Euler-Maruyama oracle and ensemble diagnostics."""

from .closedform import Asymptotic, FiniteTime
from .noise import PathGrid, SeedPolicy
from .spectrum import InitialState, LudersDecomposition, Spectrum, decompose, initial_moments

__version__ = "0.1.0"

__all__ = [
    "Asymptotic",
    "FiniteTime",
    "InitialState",
    "LudersDecomposition",
    "PathGrid",
    "SeedPolicy",
    "Spectrum",
    "decompose",
    "initial_moments",
]
