"""Metastatic population density in the (size, angiogenic capacity) plane.

The density is transported by the tumour growth field and renewed on the
boundary of the square ``(1, b)^2``.  The package computes the Malthus
parameter, the direct and adjoint eigenvectors, and checks the long-time
behaviour of simulated solutions.
"""

from .analysis import (ConvergenceReport, balance_residual, check_comparison, check_contraction,
                       check_mean_value, convergence_report, gronwall_bound, mean_value_closed_form,
                       psi_norm)
from .boundary import BoundaryPoint, EmissionProfile, Side, boundary_quadrature, chart, unchart
from .errors import (ConfigError, DomainError, MetastatError, NumericalError, SingularityError,
                     StepSizeError, SubcriticalError)
from .flow import FlowResult, flow, inverse_flow, primary_tumor
from .growth import GrowthParams, PhasePoint, divergence, velocity
from .renewal import (CharacteristicLattice, DensityField, SourceTerm, build_lattice, kernel,
                      simulate, solve_birth_rate, to_physical, weighted_mass)
from .spectral import SpectralSolution, laplace_F, solve_malthus, solve_spectral

__version__ = "0.1.0"

__all__ = [
    "BoundaryPoint", "CharacteristicLattice", "ConfigError", "ConvergenceReport", "DensityField",
    "DomainError", "EmissionProfile", "FlowResult", "GrowthParams", "MetastatError", "NumericalError",
    "PhasePoint", "Side", "SingularityError", "SourceTerm", "SpectralSolution", "StepSizeError",
    "SubcriticalError", "balance_residual", "boundary_quadrature", "build_lattice", "chart",
    "check_comparison", "check_contraction", "check_mean_value", "convergence_report", "divergence",
    "flow", "gronwall_bound", "inverse_flow", "kernel", "laplace_F", "mean_value_closed_form",
    "primary_tumor", "psi_norm", "simulate", "solve_birth_rate", "solve_malthus", "solve_spectral",
    "to_physical", "unchart", "velocity", "weighted_mass",
]
