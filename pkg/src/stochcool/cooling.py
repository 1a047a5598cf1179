"""Iterated feedback cooling with full re-thermalization between operations.

Starting from an equilibrium at T_i, one operation changes the energy by
dE(T_i); the gas is then assumed to re-equilibrate at fixed N_tot to the
temperature T_{i+1} whose equilibrium energy is E(T_i) + dE(T_i).

Three ways of producing the temperature-versus-step curve are offered:

* ``exact``: evaluate dE at every step.
* ``grid``: tabulate dE on a logarithmic temperature grid, check the
  interpolation error, then step on the interpolant (cheap per step).
* ``ode``: treat the step index as continuous, dn/dT = C(T) / (-dE(T)),
  and integrate it adaptively. This is the default since dE/E is tiny at
  high temperature and millions of steps are typical.
"""

from __future__ import annotations

import bisect
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .basis import BasisCutoff, CutoffLike, OperatorFactors, WindowRegion, as_cutoff, operator_factors
from .errors import ConvergenceError, DomainError, UsageError
from .feedback import EnergyChangeBreakdown, FeedbackPolicy, evaluate_feedback
from .thermo import (GROUND_ENERGY, ThermalEquilibrium, critical_temperature_estimate, heat_capacity,
                     invert_energy_to_temperature, required_cutoff, solve_chemical_potential,
                     total_energy)

log = logging.getLogger(__name__)

MODES = ("exact", "grid", "ode")
STOP_TARGET = "target"
STOP_FLOOR = "floor"
STOP_HEATING = "heating"
STOP_STALLED = "stalled"
STOP_BUDGET = "max_steps"
STOP_GROUND = "ground"

_TERMS = ("measurement_heating", "backaction_heating", "number_fluct_heating", "kinetic_subtraction")


@functools.lru_cache(maxsize=32)
def cached_factors(window: WindowRegion, n_max: int) -> OperatorFactors:
    """Operator factors are costly at large cutoffs and reused every step."""
    return operator_factors(window, BasisCutoff(n_max))


@dataclass(frozen=True)
class WindowSchedule:
    """Feedback window as a function of temperature.

    ``initial`` is used for T >= ``switch_T`` and ``later`` below it. Without
    a switch the window is fixed.
    """

    initial: WindowRegion = field(default_factory=WindowRegion.centered)
    later: Optional[WindowRegion] = None
    switch_T: Optional[float] = None

    def __post_init__(self):
        if (self.later is None) != (self.switch_T is None):
            raise UsageError("a window switch needs both a later window and a switch temperature")
        if self.switch_T is not None and not self.switch_T > 0:
            raise DomainError(f"switch temperature must be positive, got {self.switch_T!r}")

    @classmethod
    def fixed(cls, window: WindowRegion) -> "WindowSchedule":
        return cls(window)

    @classmethod
    def move_out(cls, N_tot: float, ratio: float = 1.2, offset: float = 5.0, width: float = 1.0,
                 initial: Optional[WindowRegion] = None) -> "WindowSchedule":
        """Centered window above ratio * T0, window displaced by ``offset`` dq0 below."""
        T0 = critical_temperature_estimate(N_tot)
        return cls(initial or WindowRegion.centered(width), WindowRegion.shifted(offset, width), ratio * T0)

    def window_at(self, T: float) -> WindowRegion:
        if self.switch_T is not None and T < self.switch_T:
            return self.later
        return self.initial

    def breakpoints(self) -> List[float]:
        return [] if self.switch_T is None else [self.switch_T]


@dataclass(frozen=True)
class LoopConfig:
    """Settings of a cooling run; temperatures in trap units.

    The run stops when T <= ``T_target``, when dE rises above
    ``-stall_fraction * |dE(T_start)|`` (reported as ``heating`` if dE >= 0,
    else ``stalled``), or after ``max_steps`` operations. The ``grid`` and
    ``ode`` modes need a lower temperature bound; it is ``T_target`` when
    positive, otherwise ``floor_ratio * T0``.
    """

    T_start: float
    N_tot: float
    schedule: WindowSchedule = field(default_factory=WindowSchedule)
    max_steps: int = 10**9
    T_target: float = 0.0
    stop_on_heating: bool = True
    stall_fraction: float = 1e-3
    mode: str = "ode"
    policy: FeedbackPolicy = field(default_factory=FeedbackPolicy)
    n_max: Optional[int] = None
    strategy: str = "series"
    max_records: int = 10_000
    floor_ratio: float = 0.25
    grid_points: int = 33
    grid_rtol: float = 1e-3
    grid_max_points: int = 1025
    ode_rtol: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        if not (self.T_start > 0 and math.isfinite(self.T_start)):
            raise DomainError(f"T_start must be positive, got {self.T_start!r}")
        if not self.N_tot > 0:
            raise DomainError(f"N_tot must be positive, got {self.N_tot!r}")
        if not self.T_target >= 0:
            raise DomainError(f"T_target must be non-negative, got {self.T_target!r}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise UsageError(f"max_steps must be an integer >= 1, got {self.max_steps!r}")
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.max_records < 2:
            raise UsageError("max_records must be at least 2")
        if not 0 <= self.stall_fraction < 1:
            raise UsageError("stall_fraction must lie in [0, 1)")
        if self.grid_points < 5 or self.grid_max_points < self.grid_points:
            raise UsageError("grid needs at least 5 points and grid_max_points >= grid_points")
        if not self.floor_ratio > 0:
            raise UsageError("floor_ratio must be positive")

    @property
    def cutoff(self) -> BasisCutoff:
        if self.n_max is not None:
            return BasisCutoff(self.n_max)
        return required_cutoff(self.T_start, self.N_tot)

    @property
    def T_floor(self) -> float:
        if self.T_target > 0:
            return self.T_target
        return self.floor_ratio * critical_temperature_estimate(max(self.N_tot, 1.0))


@dataclass(frozen=True)
class TrajectoryRecord:
    """State before operation ``step`` (a real number in ``ode`` mode)."""

    step: float
    T: float
    E: float
    breakdown: EnergyChangeBreakdown
    mean_Nw: float
    condensate_fraction: float
    clamped: bool = False


@dataclass
class Trajectory:
    records: List[TrajectoryRecord]
    stop_reason: str
    steps: float
    config: LoopConfig
    grid_error: Optional[float] = None

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]


def _equilibrium(T: float, N_tot: float, cutoff: BasisCutoff) -> ThermalEquilibrium:
    return solve_chemical_potential(T, N_tot, cutoff, strict=False)


def _evaluate(T: float, N_tot: float, cutoff: BasisCutoff, window: WindowRegion,
              policy: Optional[FeedbackPolicy], strategy: str):
    eq = _equilibrium(T, N_tot, cutoff)
    ev = evaluate_feedback(eq, window, policy, strategy, factors=cached_factors(window, cutoff.n_max))
    return eq, ev


def single_step(T_i: float, N_tot: float, window: WindowRegion, policy: Optional[FeedbackPolicy] = None,
                cutoff: Optional[CutoffLike] = None, strategy: str = "series",
                step: int = 0) -> Tuple[float, TrajectoryRecord]:
    """One feedback operation followed by re-equilibration at fixed N_tot.

    Returns the new temperature and the record of the state before the
    operation. If the energy would drop below the ground-state energy the
    temperature is clamped to 0 and the record is flagged ``clamped``.
    """
    if not T_i > 0:
        raise DomainError(f"temperature must be positive, got {T_i!r}")
    cutoff = as_cutoff(cutoff) if cutoff is not None else required_cutoff(T_i, N_tot)
    eq, ev = _evaluate(T_i, N_tot, cutoff, window, policy, strategy)
    E = total_energy(eq)
    E_next = E + ev.total
    clamped = E_next <= GROUND_ENERGY * N_tot
    T_next = 0.0 if clamped else invert_energy_to_temperature(E_next, N_tot, cutoff)
    rec = TrajectoryRecord(step, T_i, E, ev.breakdown, ev.correlators.mean_Nw,
                           eq.condensate_fraction, clamped)
    return T_next, rec


def log_spaced_steps(max_steps: int, count: int) -> np.ndarray:
    """Step indices 0, 1, 2, ... thinning out logarithmically; at most ``count`` of them."""
    count = max(int(count), 1)
    if max_steps + 1 <= count:
        return np.arange(max_steps + 1)
    n = count
    while True:
        steps = np.unique(np.concatenate(([0], np.round(np.geomspace(1, max_steps, n)).astype(np.int64))))
        if len(steps) >= count or n > 4 * count:
            return steps[:count]
        n += count - len(steps)


class _Recorder:
    """Keeps log-spaced records and always the final one, within ``max_records``."""

    def __init__(self, max_steps: int, max_records: int):
        self._wanted = log_spaced_steps(max_steps, max_records - 1)
        self._next = 0
        self.records: List[TrajectoryRecord] = []

    def wants(self, step: int) -> bool:
        while self._next < len(self._wanted) and self._wanted[self._next] < step:
            self._next += 1
        return self._next < len(self._wanted) and self._wanted[self._next] == step

    def offer(self, rec: TrajectoryRecord):
        if self.wants(int(rec.step)):
            self.records.append(rec)

    def finish(self, rec: TrajectoryRecord) -> List[TrajectoryRecord]:
        if not self.records or self.records[-1].step != rec.step:
            self.records.append(rec)
        return self.records


def _stop_threshold(config: LoopConfig, dE_start: float) -> float:
    """dE at or above this value ends the run."""
    return -config.stall_fraction * abs(dE_start)


def _heating_reason(dE: float) -> str:
    return STOP_HEATING if dE >= 0 else STOP_STALLED


def _record(step, T, eq, ev, clamped=False) -> TrajectoryRecord:
    return TrajectoryRecord(step, T, total_energy(eq), ev.breakdown, ev.correlators.mean_Nw,
                            eq.condensate_fraction, clamped)


def run_trajectory(config: LoopConfig, progress: Optional[Callable[[str], None]] = None) -> Trajectory:
    """Cool from ``config.T_start`` until a stop condition holds."""
    cutoff = config.cutoff
    eq0, ev0 = _evaluate(config.T_start, config.N_tot, cutoff, config.schedule.window_at(config.T_start),
                         config.policy, config.strategy)
    first = _record(0, config.T_start, eq0, ev0)
    if config.T_start <= config.T_target:
        return Trajectory([first], STOP_TARGET, 0, config)
    threshold = _stop_threshold(config, ev0.total)
    if config.stop_on_heating and ev0.total >= threshold:
        return Trajectory([first], _heating_reason(ev0.total), 0, config)
    if config.mode == "exact":
        return _run_exact(config, cutoff, first, threshold)
    if config.mode == "grid":
        return _run_grid(config, cutoff, first, threshold, progress)
    return _run_ode(config, cutoff, first, threshold)


def _run_exact(config: LoopConfig, cutoff: BasisCutoff, first: TrajectoryRecord,
               threshold: float) -> Trajectory:
    rec_keeper = _Recorder(config.max_steps, config.max_records)
    rec_keeper.offer(first)
    rec, step = first, 0
    while True:
        if step >= config.max_steps:
            reason = STOP_BUDGET
            break
        E_next = rec.E + rec.breakdown.total
        step += 1
        if E_next <= GROUND_ENERGY * config.N_tot:
            rec = TrajectoryRecord(step, 0.0, GROUND_ENERGY * config.N_tot, EnergyChangeBreakdown.zero(),
                                   0.0, 1.0, clamped=True)
            reason = STOP_GROUND
            break
        T = invert_energy_to_temperature(E_next, config.N_tot, cutoff)
        eq, ev = _evaluate(T, config.N_tot, cutoff, config.schedule.window_at(T), config.policy,
                           config.strategy)
        rec = TrajectoryRecord(step, T, E_next, ev.breakdown, ev.correlators.mean_Nw, eq.condensate_fraction)
        rec_keeper.offer(rec)
        if T <= config.T_target:
            reason = STOP_TARGET
            break
        if config.stop_on_heating and ev.total >= threshold:
            reason = _heating_reason(ev.total)
            break
    return Trajectory(rec_keeper.finish(rec), reason, step, config)


# ---------------------------------------------------------------------------
# tabulated dE(T)


@dataclass
class _Segment:
    """dE and its terms tabulated against energy on one window-schedule interval."""

    T_lo: float
    T_hi: float
    lnT: np.ndarray
    E: np.ndarray
    terms: np.ndarray  # (4, n)
    mean_Nw: np.ndarray
    condensate: np.ndarray
    error: float = 0.0

    def splines(self):
        total = self.terms.sum(axis=0)
        return (CubicSpline(self.E, total), CubicSpline(self.E, self.lnT),
                [CubicSpline(self.E, t) for t in self.terms], CubicSpline(self.E, self.mean_Nw),
                CubicSpline(self.E, self.condensate))


def _segments(config: LoopConfig) -> List[Tuple[float, float]]:
    lo, hi = config.T_floor, config.T_start
    cuts = sorted((t for t in config.schedule.breakpoints() if lo < t < hi), reverse=True)
    edges = [hi] + cuts + [lo]
    return [(edges[i + 1], edges[i]) for i in range(len(edges) - 1)]


def _tabulate(config: LoopConfig, cutoff: BasisCutoff, T_lo: float, T_hi: float,
              progress: Optional[Callable[[str], None]]) -> _Segment:
    # window choice inside a segment: use the one valid just below T_hi
    window = config.schedule.window_at(T_hi * (1 - 1e-12)) if T_hi < config.T_start else \
        config.schedule.window_at(T_hi)
    cache: Dict[float, tuple] = {}

    def point(lnT):
        eq, ev = _evaluate(math.exp(lnT), config.N_tot, cutoff, window, config.policy, config.strategy)
        b = ev.breakdown
        return (total_energy(eq), [getattr(b, t) for t in _TERMS], ev.correlators.mean_Nw,
                eq.condensate_fraction)

    def fill(nodes):
        todo = [x for x in nodes if x not in cache]
        if config.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                for x, val in zip(todo, pool.map(point, todo)):
                    cache[x] = val
        else:
            for x in todo:
                cache[x] = point(x)

    n = config.grid_points
    while True:
        nodes = list(np.linspace(math.log(T_lo), math.log(T_hi), n))
        fill(nodes)
        vals = [cache[x] for x in nodes]
        E = np.array([v[0] for v in vals])
        terms = np.array([v[1] for v in vals]).T
        seg = _Segment(T_lo, T_hi, np.array(nodes), E, terms, np.array([v[2] for v in vals]),
                       np.array([v[3] for v in vals]))
        total = terms.sum(axis=0)
        # interpolate from the even nodes, compare on the odd ones
        coarse = CubicSpline(E[::2], total[::2])
        scale = max(np.abs(total).max(), 1e-300)
        seg.error = float(np.abs(coarse(E[1::2]) - total[1::2]).max() / scale)
        if progress:
            progress(f"grid [{T_lo:.6g}, {T_hi:.6g}] with {n} points: interpolation error {seg.error:.3e}")
        if seg.error <= config.grid_rtol:
            return seg
        if 2 * n - 1 > config.grid_max_points:
            raise ConvergenceError(
                f"dE(T) grid on [{T_lo:.6g}, {T_hi:.6g}] still has interpolation error "
                f"{seg.error:.3e} > {config.grid_rtol:g} with {n} points")
        n = 2 * n - 1


def _run_grid(config: LoopConfig, cutoff: BasisCutoff, first: TrajectoryRecord, threshold: float,
              progress) -> Trajectory:
    rec_keeper = _Recorder(config.max_steps, config.max_records)
    rec_keeper.offer(first)
    E, step, reason, rec = first.E, 0, None, first
    worst = 0.0
    for T_lo, T_hi in _segments(config):
        seg = _tabulate(config, cutoff, T_lo, T_hi, progress)
        worst = max(worst, seg.error)
        total, lnT, terms, nw, cf = seg.splines()
        E_lo = seg.E[0]
        x, c = total.x, total.c
        k = min(max(bisect.bisect_right(x, E) - 1, 0), len(x) - 2)

        def make_record(s, e):
            bd = EnergyChangeBreakdown(*(float(t(e)) for t in terms))
            return TrajectoryRecord(s, float(math.exp(lnT(e))), e, bd, float(nw(e)), float(cf(e)))

        while True:
            # piecewise cubic evaluation of dE(E) without per-call spline overhead
            while k > 0 and E < x[k]:
                k -= 1
            d = E - x[k]
            dE = ((c[0, k] * d + c[1, k]) * d + c[2, k]) * d + c[3, k]
            if config.stop_on_heating and dE >= threshold:
                reason = _heating_reason(dE)
                break
            if step >= config.max_steps:
                reason = STOP_BUDGET
                break
            E += dE
            step += 1
            if rec_keeper.wants(step):
                rec = make_record(step, E)
                rec_keeper.records.append(rec)
            if E <= E_lo:
                break
        if reason is not None:
            break
    final = make_record(step, max(E, E_lo))
    if reason is None:
        reason = STOP_TARGET if config.T_target > 0 else STOP_FLOOR
    return Trajectory(rec_keeper.finish(final), reason, step, config, grid_error=worst)


# ---------------------------------------------------------------------------
# continuum limit


def _run_ode(config: LoopConfig, cutoff: BasisCutoff, first: TrajectoryRecord,
             threshold: float) -> Trajectory:
    cache: Dict[float, tuple] = {}
    N = config.N_tot

    def state(T, window):
        key = (T, window)
        if key not in cache:
            eq, ev = _evaluate(T, N, cutoff, window, config.policy, config.strategy)
            cache[key] = (eq, ev, heat_capacity(eq))
        return cache[key]

    # keeps dn/dT finite at trial points past a stall
    dE_cap = 0.5 * threshold if threshold < 0 else -1e-12 * abs(first.breakdown.total)
    n0, reason, points = 0.0, None, []
    for T_lo, T_hi in _segments(config):
        window = config.schedule.window_at(T_hi * (1 - 1e-12)) if T_hi < config.T_start else \
            config.schedule.window_at(T_hi)

        def rhs(s, y):
            T = math.exp(s)
            _, ev, C = state(T, window)
            dE = min(ev.total, dE_cap)
            return [T * C / dE]

        def stall(s, y):
            return state(math.exp(s), window)[1].total - threshold
        stall.terminal = True

        def budget(s, y):
            return y[0] - config.max_steps
        budget.terminal = True

        events = [budget] + ([stall] if config.stop_on_heating else [])
        if config.stop_on_heating and stall(math.log(T_hi), [n0]) >= 0:
            reason = _heating_reason(state(T_hi, window)[1].total)
            points.append((n0, T_hi, window))
            break
        sol = solve_ivp(rhs, (math.log(T_hi), math.log(T_lo)), [n0], method="RK45", rtol=config.ode_rtol,
                        atol=1e-9, dense_output=True, events=events)
        if sol.status < 0:
            raise ConvergenceError(f"continuum integration failed: {sol.message}")
        s_end = sol.t[-1]
        # every evaluated temperature of this segment becomes a candidate record
        for (T, w) in list(cache):
            if w == window and s_end - 1e-12 <= math.log(T) <= math.log(T_hi) + 1e-12:
                points.append((float(sol.sol(math.log(T))[0]), T, window))
        n0 = float(sol.y[0, -1])
        points.append((n0, math.exp(s_end), window))
        if sol.status == 1:
            if sol.t_events[0].size:
                reason = STOP_BUDGET
            else:
                reason = _heating_reason(state(math.exp(s_end), window)[1].total)
            break
    if reason is None:
        reason = STOP_TARGET if config.T_target > 0 else STOP_FLOOR

    points.sort(key=lambda p: (p[0], -p[1]))
    unique = []
    for p in points:
        if not unique or p[0] > unique[-1][0] or p[1] != unique[-1][1]:
            unique.append(p)
    if len(unique) > config.max_records - 1:
        keep = np.unique(np.round(np.linspace(0, len(unique) - 1, config.max_records - 1)).astype(int))
        unique = [unique[i] for i in keep]
    records = [first]
    for n, T, w in unique:
        if n == 0 and T == config.T_start:
            continue
        eq, ev, _ = state(T, w)
        records.append(_record(n, T, eq, ev))
    return Trajectory(records, reason, records[-1].step, config)
