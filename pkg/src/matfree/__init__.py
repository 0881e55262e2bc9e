"""Matrix-free finite elements for transient heat conduction on fixed grids."""
from .errors import (BreakdownError, ContractViolation, DegenerateElementError, FactorizationError,
                     LikelihoodError, MatfreeError, NonConvergenceError, PartitionError)
from .materials import MaterialCoefficients, MaterialField
from .mesh import GridSpec
from .operator import SystemOperator
from .solver import PcgConfig, TransientProblem, pcg, simulate

__version__ = "0.1.0"

__all__ = ["BreakdownError", "ContractViolation", "DegenerateElementError", "FactorizationError",
           "LikelihoodError", "MatfreeError", "NonConvergenceError", "PartitionError",
           "MaterialCoefficients", "MaterialField", "GridSpec", "SystemOperator", "PcgConfig",
           "TransientProblem", "pcg", "simulate"]
