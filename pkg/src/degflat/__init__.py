"""Flatness-based boundary control of a strongly degenerate heat equation.

Modules: ``specfun`` (Gamma, Bessel J and its zeros), ``jets`` (truncated
Taylor arithmetic and the Gevrey bump), ``spectral`` (eigenbasis, projection,
flat output), ``flatness`` (series solution and control), ``simulator``
(Galerkin and finite-volume verification) and ``cli``.
"""
from .errors import (ConfigError, ConvergenceError, DomainError, GridError, MismatchError,
                     NumericalError, PrecisionWarning, QuadratureError, SingularityError)
from .flatness import ControlSignal, FlatControl, assemble_control, control_value, denominators
from .spectral import ModelParams, build_basis, eigenfunction, free_evolution, project

__version__ = "0.1.0"
