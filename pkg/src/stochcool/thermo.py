"""Grand-canonical ideal Bose gas in the truncated isotropic trap.

The retained mode set is the cube {0..n_max}^3 so that every later trace
factors over the axes. Occupations only depend on the total level
n = n_x + n_y + n_z with energy n + 3/2, so all state data is tabulated per
level together with its cube-restricted degeneracy.

The chemical potential is carried through its gap to the ground level,
``gap = 3/2 - mu``. Near and below condensation the gap is of order T/N and
would lose most of its digits if reconstructed from mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import zeta

from .basis import BasisCutoff, CutoffLike, as_cutoff
from .errors import CapacityError, ConvergenceError, DomainError

GROUND_ENERGY = 1.5
ZETA3 = float(zeta(3.0))
#: corner-mode occupation allowed relative to N_tot
CAPACITY_RATIO = 1e-12

_RTOL = 4 * np.finfo(float).eps


@lru_cache(maxsize=64)
def _degeneracy(n_max: int) -> np.ndarray:
    ones = np.ones(n_max + 1)
    g = np.convolve(np.convolve(ones, ones), ones)
    g = np.rint(g)
    g.setflags(write=False)
    return g


def level_degeneracy(cutoff: CutoffLike) -> np.ndarray:
    """Number of cube modes with n_x + n_y + n_z = n, for n = 0..3 n_max."""
    return _degeneracy(as_cutoff(cutoff).n_max)


def bose_occupation(x):
    """1 / (exp(x) - 1) for x > 0, returning 0 where exp overflows."""
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(x)


@dataclass(frozen=True)
class ThermalEquilibrium:
    """Grand-canonical equilibrium at temperature ``T`` (trap units).

    ``occupations[n]`` is the Bose factor of every mode on total level n.
    At ``T == 0`` all atoms sit in the ground mode and ``gap`` is 0.
    """

    T: float
    gap: float
    N_tot: float
    cutoff: BasisCutoff
    occupations: np.ndarray = field(repr=False)

    @property
    def mu(self) -> float:
        return GROUND_ENERGY - self.gap

    @property
    def beta(self) -> float:
        return math.inf if self.T == 0 else 1.0 / self.T

    @property
    def log_fugacity(self) -> float:
        return self.mu / self.T

    @property
    def z(self) -> float:
        """Fugacity exp(mu / T); may overflow to inf at very low T."""
        try:
            return math.exp(self.log_fugacity)
        except OverflowError:
            return math.inf

    @property
    def ground_ratio(self) -> float:
        """z exp(-3 beta / 2) = exp(-beta gap); the series parameter, < 1."""
        return 0.0 if self.T == 0 else math.exp(-self.gap / self.T)

    @property
    def degeneracy(self) -> np.ndarray:
        return level_degeneracy(self.cutoff)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(3 * self.cutoff.n_max + 1)

    @property
    def energies(self) -> np.ndarray:
        return self.levels + GROUND_ENERGY

    @property
    def ground_occupation(self) -> float:
        return float(self.occupations[0])

    @property
    def condensate_fraction(self) -> float:
        return self.ground_occupation / self.N_tot

    @property
    def mean_number(self) -> float:
        return float(self.degeneracy @ self.occupations)

    def mode_occupations(self) -> np.ndarray:
        """Occupation of every cube mode, indexed [n_x, n_y, n_z]."""
        n = np.arange(self.cutoff.size)
        return self.occupations[n[:, None, None] + n[None, :, None] + n[None, None, :]]


def _occupations(T: float, gap: float, n_max: int) -> np.ndarray:
    n = np.arange(3 * n_max + 1)
    return bose_occupation((n + gap) / T)


def _number(T: float, gap: float, n_max: int) -> float:
    return float(_degeneracy(n_max) @ _occupations(T, gap, n_max))


def ground_state(N_tot: float, cutoff: CutoffLike) -> ThermalEquilibrium:
    """The T = 0 limit: every atom in the (0,0,0) mode."""
    cutoff = as_cutoff(cutoff)
    occ = np.zeros(3 * cutoff.n_max + 1)
    occ[0] = N_tot
    occ.setflags(write=False)
    return ThermalEquilibrium(0.0, 0.0, float(N_tot), cutoff, occ)


def required_cutoff(T: float, N_tot: float) -> BasisCutoff:
    """Smallest n_max meeting the capacity rule at temperature T for any mu < 3/2."""
    if T <= 0:
        return BasisCutoff(0)
    n_max = math.ceil(T * math.log1p(1.0 / (CAPACITY_RATIO * N_tot)) / 3.0)
    return BasisCutoff(max(n_max, 1))


def check_capacity(eq: ThermalEquilibrium) -> None:
    """Raise :class:`CapacityError` if the corner mode is not negligibly occupied."""
    if eq.cutoff.n_max == 0:
        return
    corner = float(eq.occupations[-1])
    limit = CAPACITY_RATIO * eq.N_tot
    if corner >= limit:
        need = required_cutoff(eq.T, eq.N_tot).n_max
        raise CapacityError(
            f"cutoff n_max={eq.cutoff.n_max} too small at T={eq.T:.6g}, N_tot={eq.N_tot:.6g}: "
            f"corner-mode occupation {corner:.3e} exceeds {limit:.3e} "
            f"(shortfall factor {corner / limit:.3g}); use n_max >= {need}")


def solve_chemical_potential(T: float, N_tot: float, cutoff: CutoffLike,
                             strict: bool = True) -> ThermalEquilibrium:
    """Find mu with sum over cube modes of the Bose factor equal to N_tot.

    The mean number is strictly decreasing in the gap 3/2 - mu, so the root
    is bracketed in log(gap) and refined with Brent's method. With
    ``strict`` the capacity rule of :func:`check_capacity` is enforced.
    """
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T!r}")
    if not N_tot > 0:
        raise DomainError(f"N_tot must be positive, got {N_tot!r}")
    cutoff = as_cutoff(cutoff)
    n_max = cutoff.n_max
    log_target = math.log(N_tot)

    def residual(log_gap):
        return math.log(_number(T, math.exp(log_gap), n_max)) - log_target

    # ground mode alone holds more than N_tot below this gap
    lo = math.log(0.5 * T * math.log1p(1.0 / N_tot))
    hi = math.log(T)
    for _ in range(400):
        if residual(hi) < 0:
            break
        lo, hi = hi, hi + math.log(4.0)
    else:  # pragma: no cover - unreachable for finite inputs
        raise ConvergenceError("could not bracket the chemical potential")
    log_gap = brentq(residual, lo, hi, xtol=1e-16, rtol=_RTOL, maxiter=500)
    gap = math.exp(log_gap)
    occ = _occupations(T, gap, n_max)
    occ.setflags(write=False)
    eq = ThermalEquilibrium(float(T), gap, float(N_tot), cutoff, occ)
    if strict:
        check_capacity(eq)
    return eq


def total_energy(eq: ThermalEquilibrium) -> float:
    """Sum of E_k f_k over the cube modes."""
    return GROUND_ENERGY * eq.N_tot + excitation_energy(eq)


def excitation_energy(eq: ThermalEquilibrium) -> float:
    """Energy above the N_tot-atom ground state, sum of n f over levels."""
    return float((eq.degeneracy * eq.levels) @ eq.occupations)


def heat_capacity(eq: ThermalEquilibrium) -> float:
    """dE/dT at fixed mean atom number."""
    if eq.T == 0:
        return 0.0
    g, f, x = eq.degeneracy, eq.occupations, eq.levels + eq.gap
    var = g * f * (1.0 + f)
    # d(gap)/dT from d N / dT = 0
    dgap = float(var @ x) / (eq.T * float(var.sum()))
    return float((var * eq.energies) @ (x / eq.T**2 - dgap / eq.T))


def invert_energy_to_temperature(E: float, N_tot: float, cutoff: CutoffLike,
                                 strict: bool = False) -> float:
    """Temperature whose equilibrium has total energy ``E`` at fixed N_tot."""
    cutoff = as_cutoff(cutoff)
    ground = GROUND_ENERGY * N_tot
    excess = E - ground
    if excess < -1e-13 * abs(ground):
        raise DomainError(f"energy {E!r} is below the ground-state energy {ground!r}")
    if excess <= 0:
        return 0.0
    log_target = math.log(excess)

    def residual(log_T):
        eq = solve_chemical_potential(math.exp(log_T), N_tot, cutoff, strict=False)
        # floor keeps the residual finite where the excitation energy underflows
        return math.log(max(excitation_energy(eq), 1e-300)) - log_target

    guess = max(excess / (3.0 * N_tot), 1e-3)
    lo, hi = math.log(guess) - 1.0, math.log(guess) + 1.0
    for _ in range(200):
        if residual(hi) > 0:
            break
        hi += 1.0
    for _ in range(200):
        if residual(lo) < 0:
            break
        lo -= 1.0
    T = math.exp(brentq(residual, lo, hi, xtol=1e-15, rtol=_RTOL, maxiter=500))
    if strict:
        check_capacity(solve_chemical_potential(T, N_tot, cutoff, strict=False))
    return T


def critical_temperature_estimate(N_tot: float) -> float:
    """Semiclassical condensation temperature (N_tot / zeta(3))^(1/3)."""
    if not N_tot >= 1:
        raise DomainError(f"N_tot must be >= 1, got {N_tot!r}")
    return (N_tot / ZETA3) ** (1.0 / 3.0)


def condensate_statistics(eq: ThermalEquilibrium):
    """Grand-canonical mean and variance f0 (1 + f0) of the ground-mode occupation."""
    f0 = eq.ground_occupation
    return f0, f0 * (1.0 + f0)


def condensation_crossover(N_tot: float, cutoff: CutoffLike, fraction: float = 0.01) -> float:
    """Temperature at which the condensate fraction equals ``fraction``."""
    T0 = critical_temperature_estimate(N_tot)

    def residual(T):
        return solve_chemical_potential(T, N_tot, cutoff, strict=False).condensate_fraction - fraction

    return brentq(residual, 0.2 * T0, 2.0 * T0, xtol=1e-12 * T0)


@dataclass(frozen=True)
class OccupationSeries:
    """Fugacity expansion f = sum_{l>=1} r^l exp(-l beta n) per total level n.

    ``ratio`` is r = z exp(-3 beta / 2). ``level_tails[n]`` is the exactly
    summed remainder beyond ``terms``, ``tail_bound`` its degeneracy-weighted
    sum (the number of atoms carried by the remainder).
    """

    beta: float
    ratio: float
    terms: int
    levels: np.ndarray = field(repr=False)
    degeneracy: np.ndarray = field(repr=False)
    level_tails: np.ndarray = field(repr=False)
    tail_bound: float

    @property
    def coefficients(self) -> np.ndarray:
        """r^l for l = 1..terms."""
        return self.ratio ** np.arange(1, self.terms + 1)

    @property
    def rates(self) -> np.ndarray:
        """l beta for l = 1..terms."""
        return self.beta * np.arange(1, self.terms + 1)

    def partial_sums(self, with_identity: bool = False) -> np.ndarray:
        """Truncated series per level; ``with_identity`` gives the expansion of 1 + f."""
        x = self.ratio * np.exp(-self.beta * self.levels)
        l = np.arange(1, self.terms + 1)
        s = (x[:, None] ** l[None, :]).sum(axis=1)
        return s + 1.0 if with_identity else s

    def total(self, with_identity: bool = False) -> np.ndarray:
        """Partial sums plus the exact geometric tails."""
        return self.partial_sums(with_identity) + self.level_tails


def fugacity_series(beta: float, mu: float, energies, terms: int, degeneracy=None) -> OccupationSeries:
    """Occupation series for arbitrary single-mode energies (lowest energy first)."""
    energies = np.asarray(energies, dtype=float)
    if terms < 0:
        raise DomainError("term count must be non-negative")
    e_min = float(energies.min())
    if not beta * (e_min - mu) > 0:
        raise DomainError("series requires z exp(-beta E_min) < 1")
    ratio = math.exp(-beta * (e_min - mu))
    levels = energies - e_min
    x = ratio * np.exp(-beta * levels)
    tails = x ** (terms + 1) / (-np.expm1(beta * (mu - energies)))
    g = np.ones_like(energies) if degeneracy is None else np.asarray(degeneracy, dtype=float)
    return OccupationSeries(beta, ratio, terms, levels, g, tails, float(g @ tails))


def occupation_series(eq: ThermalEquilibrium, terms: int) -> OccupationSeries:
    """Fugacity series of the equilibrium occupations with ``terms`` terms."""
    if eq.T == 0:
        raise DomainError("fugacity series does not converge at T = 0")
    beta, levels = eq.beta, eq.levels.astype(float)
    ratio = math.exp(-eq.gap * beta)
    x = ratio * np.exp(-beta * levels)
    tails = eq.occupations * x ** terms
    return OccupationSeries(beta, ratio, terms, levels, eq.degeneracy, tails,
                            float(eq.degeneracy @ tails))
