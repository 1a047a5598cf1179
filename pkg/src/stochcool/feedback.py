"""Energy change produced by one measure-and-shift feedback operation.

All quantities are in trap units (hbar = m = omega0 = 1). With the
measurement resolution sigma and the estimated window atom number N_e,

    dE = (sigma^2 / (2 N_e) + N_e / (8 sigma^2)) <N_w> / N_e
         + <dN_w P_w^2> / (2 N_e^2) - <P_w^2> / (2 N_e)

where dN_w = N_w - N_e.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

from .basis import OperatorFactors, WindowRegion, operator_factors
from .correlators import CorrelatorSet, compute_correlators
from .errors import DomainError, UsageError
from .thermo import ThermalEquilibrium
from .units import DP0, E0

SIGMA_POLICIES = ("optimal", "fixed")
NE_POLICIES = ("mean", "fixed")

_CONSISTENCY_RTOL = 1e-12


def optimal_sigma(N_e: float) -> float:
    """Resolution dp0 * sqrt(N_e) that minimizes the measurement heating."""
    if not N_e > 0:
        raise DomainError(f"N_e must be positive, got {N_e!r}")
    return DP0 * math.sqrt(N_e)


def measurement_bracket(sigma: float, N_e: float) -> float:
    """sigma^2 / (2 N_e) + N_e / (8 sigma^2); equals 1/2 at the optimal sigma."""
    if not sigma > 0 or not N_e > 0:
        raise DomainError(f"need sigma > 0 and N_e > 0, got sigma={sigma!r}, N_e={N_e!r}")
    return sigma**2 / (2.0 * N_e) + N_e / (8.0 * sigma**2)


@dataclass(frozen=True)
class FeedbackParams:
    """Concrete resolution and atom-number estimate used for one operation."""

    sigma: float
    N_e: float
    sigma_policy: str = "optimal"

    def __post_init__(self):
        if self.sigma_policy not in SIGMA_POLICIES:
            raise UsageError(f"unknown sigma policy {self.sigma_policy!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not (self.N_e > 0 and math.isfinite(self.N_e)):
            raise DomainError(f"N_e must be positive and finite, got {self.N_e!r}")

    @classmethod
    def optimal(cls, N_e: float) -> "FeedbackParams":
        return cls(optimal_sigma(N_e), float(N_e), "optimal")


@dataclass(frozen=True)
class FeedbackPolicy:
    """How sigma and N_e are chosen for a given thermal state.

    The defaults take N_e = <N_w> of the current state and sigma at its
    optimum. ``N_e_policy="fixed"`` keeps the given ``N_e``;
    ``sigma_policy="fixed"`` keeps the given ``sigma``.
    """

    sigma_policy: str = "optimal"
    sigma: Optional[float] = None
    N_e_policy: str = "mean"
    N_e: Optional[float] = None

    def __post_init__(self):
        if self.sigma_policy not in SIGMA_POLICIES:
            raise UsageError(f"unknown sigma policy {self.sigma_policy!r}")
        if self.N_e_policy not in NE_POLICIES:
            raise UsageError(f"unknown N_e policy {self.N_e_policy!r}")
        if self.sigma_policy == "fixed" and not (self.sigma is not None and self.sigma > 0):
            raise UsageError("a fixed sigma policy needs a positive sigma")
        if self.N_e_policy == "fixed" and not (self.N_e is not None and self.N_e > 0):
            raise UsageError("a fixed N_e policy needs a positive N_e")

    def params_for(self, mean_Nw: float) -> FeedbackParams:
        if self.N_e_policy == "fixed":
            N_e = float(self.N_e)
        else:
            if not mean_Nw > 0:
                raise DomainError("the window holds no atoms, so N_e cannot be estimated")
            N_e = float(mean_Nw)
        sigma = optimal_sigma(N_e) if self.sigma_policy == "optimal" else float(self.sigma)
        return FeedbackParams(sigma, N_e, self.sigma_policy)


@dataclass(frozen=True)
class EnergyChangeBreakdown:
    """The four contributions to dE; ``total`` is their sum."""

    measurement_heating: float
    backaction_heating: float
    number_fluct_heating: float
    kinetic_subtraction: float

    @property
    def total(self) -> float:
        return (self.measurement_heating + self.backaction_heating
                + self.number_fluct_heating + self.kinetic_subtraction)

    @property
    def bracket_term(self) -> float:
        """Measurement plus back-action heating."""
        return self.measurement_heating + self.backaction_heating

    def scaled(self, factor: float) -> "EnergyChangeBreakdown":
        return EnergyChangeBreakdown(*(getattr(self, f.name) * factor for f in fields(self)))

    def in_E0(self) -> "EnergyChangeBreakdown":
        """The same breakdown in units of the single-atom ground-state energy."""
        return self.scaled(1.0 / E0)

    @classmethod
    def zero(cls) -> "EnergyChangeBreakdown":
        return cls(0.0, 0.0, 0.0, 0.0)


def _check_consistency(eq: ThermalEquilibrium, window: WindowRegion, params: FeedbackParams,
                       correlators: CorrelatorSet):
    if correlators.mean_Nw < 0 or correlators.mean_Pw2 < 0:
        raise UsageError("correlators have negative <N_w> or <P_w^2>")
    if correlators.mean_Nw > eq.N_tot * (1 + 1e-9):
        raise UsageError(f"<N_w> = {correlators.mean_Nw:.6g} exceeds N_tot = {eq.N_tot:.6g}; "
                         "correlators belong to another state")
    if window.is_empty and correlators.mean_Nw != 0:
        raise UsageError("non-zero correlators given for an empty window")
    if correlators.mean_Nw > 0 and not math.isclose(correlators.N_e, params.N_e,
                                                    rel_tol=_CONSISTENCY_RTOL, abs_tol=0.0):
        raise UsageError(f"correlators were evaluated for N_e = {correlators.N_e!r} "
                         f"but the feedback uses N_e = {params.N_e!r}")


def energy_change(eq: ThermalEquilibrium, window: WindowRegion, params: FeedbackParams,
                  correlators: CorrelatorSet) -> EnergyChangeBreakdown:
    """Energy change of one feedback operation, term by term, in trap units.

    ``correlators`` must have been evaluated for this state and window with
    ``correlators.N_e == params.N_e`` (see :meth:`CorrelatorSet.with_estimate`).
    """
    _check_consistency(eq, window, params, correlators)
    n = correlators.mean_Nw
    if n == 0.0:
        return EnergyChangeBreakdown.zero()
    N_e, sigma = params.N_e, params.sigma
    return EnergyChangeBreakdown(
        measurement_heating=sigma**2 * n / (2.0 * N_e**2),
        backaction_heating=n / (8.0 * sigma**2),
        number_fluct_heating=correlators.corr_dNw_Pw2 / (2.0 * N_e**2),
        kinetic_subtraction=-correlators.mean_Pw2 / (2.0 * N_e),
    )


def estimate_Ne(eq: ThermalEquilibrium, window: WindowRegion, correlators: CorrelatorSet) -> float:
    """The atom-number estimate N_e = <N_w> of the current state."""
    if window.is_empty or not correlators.mean_Nw > 0:
        raise DomainError("the window holds no atoms, so N_e cannot be estimated")
    return float(correlators.mean_Nw)


@dataclass(frozen=True)
class FeedbackEvaluation:
    """Everything computed for one state: correlators, parameters, breakdown."""

    breakdown: EnergyChangeBreakdown
    correlators: CorrelatorSet
    params: Optional[FeedbackParams]

    @property
    def total(self) -> float:
        return self.breakdown.total


def evaluate_feedback(eq: ThermalEquilibrium, window: WindowRegion,
                      policy: Optional[FeedbackPolicy] = None, strategy: str = "series",
                      factors: Optional[OperatorFactors] = None, **kwargs) -> FeedbackEvaluation:
    """Correlators, feedback parameters and dE for ``eq`` and ``window`` in one call.

    ``params`` is None when the window holds no atoms (dE is then zero).
    """
    policy = policy or FeedbackPolicy()
    if factors is None:
        factors = operator_factors(window, eq.cutoff)
    elif factors.window != window:
        raise UsageError("operator factors were built for a different window")
    corr = compute_correlators(eq, factors, strategy=strategy, **kwargs)
    if corr.mean_Nw == 0.0:
        return FeedbackEvaluation(EnergyChangeBreakdown.zero(), corr, None)
    params = policy.params_for(corr.mean_Nw)
    corr = corr.with_estimate(params.N_e)
    return FeedbackEvaluation(energy_change(eq, window, params, corr), corr, params)

