"""Measure cones, probabilistic coherence spaces, analytic maps and a
probabilistic PCF evaluated over discretized measures."""

from .errors import (BallViolation, ConesemError, ContractViolation, OrderError, PcfSyntaxError,
                     PcfTypeError, StructuralError)

__version__ = "0.1.0"

__all__ = ["BallViolation", "ConesemError", "ContractViolation", "OrderError", "PcfSyntaxError",
           "PcfTypeError", "StructuralError", "__version__"]
