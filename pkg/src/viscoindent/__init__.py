"""Nanoindentation of viscoelastic solids: nonlinear Burgers material model,
Oliver-Pharr analysis, POD-RBF surrogates, Taguchi sensitivity and
genetic-algorithm calibration."""

from .constitutive import MaterialParams, MaterialState, integrate_stress_history
from .contact import LDCurve, LoadSchedule, ForwardConfig, forward_indentation, oliver_pharr
from .errors import ViscoIndentError

__all__ = [
    "MaterialParams",
    "MaterialState",
    "integrate_stress_history",
    "LDCurve",
    "LoadSchedule",
    "ForwardConfig",
    "forward_indentation",
    "oliver_pharr",
    "ViscoIndentError",
]
__version__ = "0.1.0"
