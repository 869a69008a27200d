"""Pseudospectral laboratory for Lyapunov functionals of free-surface parabolic flows."""

from .errors import (ConfigError, DegeneratePressure, DimensionMismatch, DomainError,
                     GeometryError, IllConditioned, InvalidField, LabError, NoClosedForm,
                     NonpositiveTaylor, ParseError, PositivityViolated, TooFewSamples,
                     Unstable, ValidationError)
from .spectral import SpectralField, TorusGrid

__version__ = "0.1.0"

__all__ = [
    "TorusGrid", "SpectralField", "LabError", "InvalidField", "GeometryError",
    "IllConditioned", "DegeneratePressure", "PositivityViolated", "NoClosedForm",
    "DimensionMismatch", "DomainError", "Unstable", "TooFewSamples", "ConfigError",
    "ParseError", "ValidationError", "NonpositiveTaylor", "__version__",
]
