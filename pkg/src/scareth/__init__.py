"""Constrained spin chains, engineered dissipation and quantum many-body scars."""

from .errors import (
    CapacityError,
    ConsistencyError,
    ConvergenceError,
    IntegrationError,
    RangeError,
    ScarethError,
    ValidationError,
)
from .model import ModelSpec, load_spec, spec_from_dict, spin_matrices

__all__ = [
    "CapacityError",
    "ConsistencyError",
    "ConvergenceError",
    "IntegrationError",
    "ModelSpec",
    "RangeError",
    "ScarethError",
    "ValidationError",
    "load_spec",
    "spec_from_dict",
    "spin_matrices",
]
