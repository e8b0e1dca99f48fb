"""Extinction calculus for continuous-state branching processes."""

from .errors import CBError, NumericalError, ValidationError
from .kernel import ExtinctionKernel, build_kernel
from .mechanism import BranchingMechanism, MechanismSpec, make_mechanism
from .scale import ScaleFunction, make_scale

__all__ = [
    "BranchingMechanism",
    "CBError",
    "ExtinctionKernel",
    "MechanismSpec",
    "NumericalError",
    "ScaleFunction",
    "ValidationError",
    "build_kernel",
    "make_mechanism",
    "make_scale",
]
__version__ = "0.1.0"
