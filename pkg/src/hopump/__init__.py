"""Exact-diagonalization and Krylov-propagation toolkit for higher-order topological pumps
of hard-core bosons on square superlattices."""

__version__ = "0.1.0"

from .errors import BudgetExceeded, ConfigurationError, DomainError, NumericalError, PumpError, UsageError
from .fock import Sector, enumerate_sector
from .lattice import LatticeSpec, build_lattice
from .pump import PumpRecord, PumpSchedule, run_pump
from .solver import EigsConfig, PropagatorConfig, ground_state, propagate_step

__all__ = [
    "BudgetExceeded",
    "ConfigurationError",
    "DomainError",
    "EigsConfig",
    "LatticeSpec",
    "NumericalError",
    "PropagatorConfig",
    "PumpError",
    "PumpRecord",
    "PumpSchedule",
    "Sector",
    "UsageError",
    "build_lattice",
    "enumerate_sector",
    "ground_state",
    "propagate_step",
    "run_pump",
]
