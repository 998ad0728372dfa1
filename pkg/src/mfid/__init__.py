"""Mean-field information control solvers for reaction-diffusion flows."""
from .errors import ConfigError, DomainError, MfidError, SolverError, StepSizeError
from .grid import Grid

__all__ = ["ConfigError", "DomainError", "Grid", "MfidError", "SolverError", "StepSizeError"]
__version__ = "0.1.0"
