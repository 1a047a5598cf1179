"""Equilibrium model of stochastic feedback cooling of an ideal Bose gas.

A harmonically trapped, non-interacting Bose gas is held in grand-canonical
equilibrium. A feedback operation measures the total momentum along z of the
atoms inside a window of the xy-plane and shifts it back to zero; this
package computes the resulting energy change from thermal correlators of the
window operators and iterates it into cooling trajectories.

Everything is in trap units (hbar = m = omega0 = 1) unless a name says
otherwise.
"""

__version__ = "0.1.0"

from .basis import (BasisCutoff, OperatorFactors, WindowRegion, commutator_defect, eigenvalue_range,
                    operator_factors, projector_defect, window_overlap_matrix)
from .cooling import (LoopConfig, Trajectory, TrajectoryRecord, WindowSchedule, run_trajectory,
                      single_step)
from .correlators import CorrelatorSet, compute_correlators, wick_moments
from .errors import CapacityError, ConvergenceError, DomainError, StochCoolError, UsageError
from .feedback import (EnergyChangeBreakdown, FeedbackParams, FeedbackPolicy, energy_change, estimate_Ne,
                       evaluate_feedback, optimal_sigma)
from .thermo import (ThermalEquilibrium, condensation_crossover, critical_temperature_estimate,
                     invert_energy_to_temperature, required_cutoff, solve_chemical_potential,
                     total_energy)
from .units import PhysicalConfig

__all__ = [
    "BasisCutoff", "CapacityError", "ConvergenceError", "CorrelatorSet", "DomainError",
    "EnergyChangeBreakdown", "FeedbackParams", "FeedbackPolicy", "LoopConfig", "OperatorFactors",
    "PhysicalConfig", "StochCoolError", "ThermalEquilibrium", "Trajectory", "TrajectoryRecord",
    "UsageError", "WindowRegion", "WindowSchedule", "commutator_defect", "compute_correlators",
    "condensation_crossover", "critical_temperature_estimate", "eigenvalue_range", "energy_change",
    "estimate_Ne", "evaluate_feedback", "invert_energy_to_temperature", "operator_factors",
    "optimal_sigma", "projector_defect", "required_cutoff", "run_trajectory", "single_step",
    "solve_chemical_potential", "total_energy", "wick_moments", "window_overlap_matrix",
]
