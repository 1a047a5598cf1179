"""Command-line front end: sweeps, trajectories, validation and unit helpers.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error,
3 numerical or capacity failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .basis import (BasisCutoff, WindowRegion, commutator_defect, eigenvalue_range, operator_factors,
                    projector_defect)
from .config import ConfigError, RunConfig, load_config, parse_config
from .cooling import LoopConfig, WindowSchedule, cached_factors, run_trajectory
from .correlators import compute_correlators
from .errors import StochCoolError, UsageError
from .feedback import evaluate_feedback, measurement_bracket, optimal_sigma
from .oracle import compare_with_wick, partition_function, random_toy_cases, toy_system
from .thermo import (check_capacity, condensation_crossover, critical_temperature_estimate,
                     required_cutoff, solve_chemical_potential)
from .units import E0, PhysicalConfig, microkelvin_to_trap_units, trap_units_to_microkelvin

log = logging.getLogger("stochcool")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SWEEP_COLUMNS = ("T_trap", "T_microK", "dE_over_E0", "measurement_heating", "backaction_heating",
                 "number_fluct_heating", "kinetic_subtraction", "mean_Nw", "condensate_fraction",
                 "error_estimate")
TRAJECTORY_COLUMNS = ("step", "T_trap", "T_microK", "E_trap", "dE_total", "measurement_heating",
                      "backaction_heating", "number_fluct_heating", "kinetic_subtraction", "mean_Nw",
                      "condensate_fraction")
FAULTS = ("sextic-sign",)
VALIDATE_TOL = 1e-8


def fmt(value) -> str:
    """Round-trip representation of a number for CSV output."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def _default_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def _to_trap(value: float, unit: str, cfg: RunConfig) -> float:
    if unit == "trap":
        return value
    if unit == "T0":
        return value * critical_temperature_estimate(cfg.N_tot)
    return microkelvin_to_trap_units(value, cfg.physical)


def sweep_temperatures(cfg: RunConfig) -> np.ndarray:
    """Temperature grid of a sweep in trap units, in output order."""
    n = cfg["sweep.points"]
    lo = _to_trap(cfg["sweep.T_min"], cfg["sweep.T_unit"], cfg)
    hi = _to_trap(cfg["sweep.T_max"], cfg["sweep.T_unit"], cfg)
    if n == 0:
        return np.empty(0)
    if n == 1:
        return np.array([lo])
    if cfg["sweep.spacing"] == "log":
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def sweep_row(T: float, cfg: RunConfig, window: WindowRegion, strategy: str) -> List[str]:
    """One CSV row: dE and its terms in units of E0 at temperature T."""
    cutoff = BasisCutoff(cfg.n_max) if cfg.n_max is not None else required_cutoff(T, cfg.N_tot)
    eq = solve_chemical_potential(T, cfg.N_tot, cutoff)
    check_capacity(eq)
    ev = evaluate_feedback(eq, window, cfg.policy, strategy,
                           factors=cached_factors(window, cutoff.n_max), **cfg.numerics)
    b = ev.breakdown.in_E0()
    c = ev.correlators
    if ev.params is None:
        err = 0.0
    else:
        N_e = ev.params.N_e
        err = (c.errors.get("corr_dNw_Pw2", 0.0) / (2 * N_e**2)
               + c.errors.get("mean_Pw2", 0.0) / (2 * N_e)) / E0
    row = [T, trap_units_to_microkelvin(T, cfg.physical), b.total, b.measurement_heating,
           b.backaction_heating, b.number_fluct_heating, b.kinetic_subtraction, c.mean_Nw,
           eq.condensate_fraction, err]
    return [fmt(v) for v in row]


def sweep_csv(cfg: RunConfig, window: WindowRegion, strategy: str, threads: int) -> str:
    temps = sweep_temperatures(cfg)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)

    def work(T):
        row = sweep_row(float(T), cfg, window, strategy)
        log.info("sweep T=%.6g trap units: dE/E0=%s", T, row[2])
        return row

    if threads > 1 and len(temps) > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(work, temps))
    else:
        rows = [work(T) for T in temps]
    writer.writerows(rows)
    return buf.getvalue()


def _output_paths(out: Optional[str], windows: Sequence[WindowRegion]) -> List[Optional[str]]:
    if len(windows) == 1:
        return [out]
    if out is None:
        raise ConfigError("several sweep.x_centers need --out (or output.path) to name the files")
    root, ext = os.path.splitext(out)
    return [f"{root}_x{fmt(w.x_center)}{ext or '.csv'}" for w in windows]


def _emit(text: str, path: Optional[str]):
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", path)


def cmd_sweep(cfg: RunConfig, out: Optional[str], strategy: str, threads: int) -> int:
    windows = cfg.windows()
    paths = _output_paths(out, windows)
    for window, path in zip(windows, paths):
        _emit(sweep_csv(cfg, window, strategy, threads), path)
    return EXIT_OK


def loop_config(cfg: RunConfig, mode: str, strategy: str, threads: int) -> LoopConfig:
    unit = cfg["trajectory.T_unit"]
    T_start = _to_trap(cfg["trajectory.T_start"], unit, cfg)
    T_target = _to_trap(cfg["trajectory.T_target"], unit, cfg)
    if cfg["trajectory.schedule"] == "move_out":
        later = WindowRegion(cfg["trajectory.switch_offset"], cfg["window.y_center"],
                             cfg["window.x_width"] / 2, cfg["window.y_width"] / 2)
        switch_T = cfg["trajectory.switch_ratio"] * critical_temperature_estimate(cfg.N_tot)
        schedule = WindowSchedule(cfg.window(), later, switch_T)
    else:
        schedule = WindowSchedule.fixed(cfg.window())
    return LoopConfig(T_start=T_start, N_tot=cfg.N_tot, schedule=schedule,
                      max_steps=cfg["trajectory.max_steps"], T_target=T_target,
                      stop_on_heating=cfg["trajectory.stop_on_heating"],
                      stall_fraction=cfg["trajectory.stall_fraction"], mode=mode, policy=cfg.policy,
                      n_max=cfg.n_max, strategy=strategy, max_records=cfg["trajectory.max_records"],
                      floor_ratio=cfg["trajectory.floor_ratio"], grid_points=cfg["trajectory.grid_points"],
                      grid_rtol=cfg["trajectory.grid_rtol"], ode_rtol=cfg["trajectory.ode_rtol"],
                      threads=threads)


def trajectory_csv(cfg: RunConfig, mode: str, strategy: str, threads: int):
    lc = loop_config(cfg, mode, strategy, threads)
    check_capacity(solve_chemical_potential(lc.T_start, lc.N_tot, lc.cutoff, strict=False))
    traj = run_trajectory(lc, progress=log.info)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for r in traj.records:
        b = r.breakdown
        step = r.step if mode == "ode" else int(r.step)
        writer.writerow([fmt(v) for v in (step, r.T, trap_units_to_microkelvin(r.T, cfg.physical), r.E,
                                          b.total, b.measurement_heating, b.backaction_heating,
                                          b.number_fluct_heating, b.kinetic_subtraction, r.mean_Nw,
                                          r.condensate_fraction)])
    return buf.getvalue(), traj


def cmd_trajectory(cfg: RunConfig, out: Optional[str], mode: str, strategy: str, threads: int) -> int:
    text, traj = trajectory_csv(cfg, mode, strategy, threads)
    log.info("trajectory stopped (%s) after %s operations at T = %.6g microK", traj.stop_reason,
             fmt(traj.steps), trap_units_to_microkelvin(traj.final.T, cfg.physical))
    _emit(text, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validation suite


def validation_checks(cfg: RunConfig, fault: Optional[str] = None) -> Iterable[tuple]:
    """Yield (name, passed, detail) for every invariant check."""
    flip = fault == "sextic-sign"
    cases = random_toy_cases(cfg["validate.toy_systems"], cfg["validate.seed"])
    for i, case in enumerate(cases):
        r = compare_with_wick(case, flip_sextic_sign=flip)
        worst = max(r["mean_Nw"], r["mean_Pw2"], r["connected"])
        yield (f"oracle.system_{i:02d}", worst <= VALIDATE_TOL,
               f"modes={len(case.modes)} max_rel_err={worst:.3e}")
        yield (f"oracle.hermitian_{i:02d}", r["imag"] <= 1e-10, f"max_imag={r['imag']:.3e}")
    for i, case in enumerate(cases[:5]):
        system = toy_system(case.modes, case.beta, case.mu)
        Z_enum, Z_prod = partition_function(system)
        rel = abs(Z_enum - Z_prod) / Z_prod
        yield f"oracle.partition_{i:02d}", rel <= 1e-12, f"rel_diff={rel:.3e}"

    window = WindowRegion.centered()
    cutoffs = sorted(cfg["validate.projector_cutoffs"])
    proj, comm = [], []
    for n_max in cutoffs:
        f = operator_factors(window, n_max)
        proj.append(projector_defect(f.A_x))
        comm.append(commutator_defect(f.A_x, f.A_y))
        lo, hi = eigenvalue_range(f.A_x)
        ok = lo >= -1e-10 and hi <= 1 + 1e-10
        yield f"projector.spectrum_n{n_max}", ok, f"eigenvalues in [{lo:.3e}, {1 - hi:+.3e} below 1]"
        yield f"projector.defect_n{n_max}", True, f"max|A^2-A|={proj[-1]:.6e}"
        yield f"commutator.defect_n{n_max}", True, f"max_norm={comm[-1]:.6e}"
    for a, b, pa, pb in zip(cutoffs, cutoffs[1:], proj, proj[1:]):
        yield f"projector.decrease_n{a}_n{b}", pb < pa, f"{pa:.6e} -> {pb:.6e}"
    for a, b, pa, pb in zip(cutoffs, cutoffs[1:], comm, comm[1:]):
        yield f"commutator.decrease_n{a}_n{b}", pb < pa, f"{pa:.6e} -> {pb:.6e}"

    for N_e in (1.0, 4.0, 37.5, 1e4):
        s_opt = optimal_sigma(N_e)
        best = measurement_bracket(s_opt, N_e)
        rel = abs(best - 0.5) / 0.5
        grid = np.geomspace(s_opt / 10, s_opt * 10, 50)
        minimal = all(best <= measurement_bracket(s, N_e) for s in grid)
        yield f"sigma_opt.N_e={fmt(N_e)}", rel <= 1e-12 and minimal, f"bracket_rel_err={rel:.3e} minimal={minimal}"

    # the two trace strategies on a cutoff small enough for dense matrices
    factors = operator_factors(WindowRegion(0.7, -0.4, 0.6, 0.9), 5)
    for T in (0.4, 2.0):
        eq = solve_chemical_potential(T, 50.0, 5, strict=False)
        d = compute_correlators(eq, factors, strategy="direct")
        s = compute_correlators(eq, factors, strategy="series")
        rel = max(abs(d.mean_Pw2 - s.mean_Pw2) / abs(d.mean_Pw2),
                  abs(d.connected - s.connected) / abs(d.connected))
        yield f"strategies.T={fmt(T)}", rel <= 1e-10, f"max_rel_diff={rel:.3e}"


def cmd_validate(cfg: RunConfig, fault: Optional[str], out: Optional[str]) -> int:
    lines, failed = [], 0
    for name, ok, detail in validation_checks(cfg, fault):
        failed += not ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} {detail}\n")
    lines.append(f"{'PASS' if failed == 0 else 'FAIL'} summary failures={failed}\n")
    _emit("".join(lines), out)
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# small reports


def cmd_tc(cfg: RunConfig, out: Optional[str]) -> int:
    T0 = critical_temperature_estimate(cfg.N_tot)
    cutoff = BasisCutoff(cfg.n_max) if cfg.n_max is not None else required_cutoff(2 * T0, cfg.N_tot)
    Tc = condensation_crossover(cfg.N_tot, cutoff)
    phys = cfg.physical
    rows = [("N_tot", cfg.N_tot), ("T0_trap", T0), ("T0_microK", trap_units_to_microkelvin(T0, phys)),
            ("crossover_trap", Tc), ("crossover_microK", trap_units_to_microkelvin(Tc, phys)),
            ("crossover_over_T0", Tc / T0), ("n_max", cutoff.n_max)]
    _emit("".join(f"{k} = {fmt(v)}\n" for k, v in rows), out)
    return EXIT_OK


CONVERT_UNITS = ("K", "microK", "nK", "trap", "T0")


def convert_temperature(value: float, src: str, dst: str, phys: PhysicalConfig,
                        N_tot: Optional[float] = None) -> float:
    scale = {"K": 1e6, "microK": 1.0, "nK": 1e-3}

    def to_trap(v, unit):
        if unit == "trap":
            return v
        if unit == "T0":
            if N_tot is None:
                raise UsageError("unit T0 needs N_tot")
            return v * critical_temperature_estimate(N_tot)
        return microkelvin_to_trap_units(v * scale[unit], phys)

    trap = to_trap(value, src)
    if dst == "trap":
        return trap
    if dst == "T0":
        return trap / to_trap(1.0, "T0")
    return trap_units_to_microkelvin(trap, phys) / scale[dst]


def cmd_convert(args, cfg: Optional[RunConfig]) -> int:
    freq = args.frequency_hz or (cfg["physical.frequency_hz"] if cfg else 500.0)
    mass = args.mass_u or (cfg["physical.mass_u"] if cfg else None)
    phys = PhysicalConfig.from_frequency(freq, mass) if mass else PhysicalConfig.from_frequency(freq)
    N_tot = args.n_tot or (cfg.N_tot if cfg else None)
    result = convert_temperature(args.value, args.from_unit, args.to_unit, phys, N_tot)
    _emit(fmt(result) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (key = value lines)")
    common.add_argument("--out", help="output file; standard output if omitted")
    common.add_argument("--threads", type=int, default=None,
                        help="parallel width for sweep points and grid builds (default: all cores)")
    common.add_argument("--strategy", choices=("direct", "series"), default=None,
                        help="trace evaluation strategy (overrides numerics.strategy)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    common.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")

    parser = argparse.ArgumentParser(prog="stochcool", description=(
        "Equilibrium model of stochastic feedback cooling of an ideal Bose gas in a harmonic trap."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="energy change per operation versus temperature (CSV)")
    traj = sub.add_parser("trajectory", parents=[common], help="temperature versus operation count (CSV)")
    traj.add_argument("--mode", choices=("exact", "grid", "ode"), default=None,
                      help="stepping scheme (overrides trajectory.mode)")
    val = sub.add_parser("validate", parents=[common], help="run the invariant and oracle checks")
    val.add_argument("--inject-fault", choices=FAULTS, default=None,
                     help="deliberately break one formula to exercise the checks")
    sub.add_parser("tc", parents=[common], help="condensation temperature report")
    conv = sub.add_parser("convert", parents=[common], help="convert a temperature between units")
    conv.add_argument("value", type=float)
    conv.add_argument("--from", dest="from_unit", choices=CONVERT_UNITS, required=True)
    conv.add_argument("--to", dest="to_unit", choices=CONVERT_UNITS, required=True)
    conv.add_argument("--frequency-hz", type=float, default=None)
    conv.add_argument("--mass-u", type=float, default=None)
    conv.add_argument("--n-tot", type=float, default=None)
    return parser


DEFAULT_VALIDATE_CONFIG = "physical.frequency_hz = 500\nN_tot = 1000\n"


def _setup_logging(args):
    level = logging.ERROR if args.quiet else (logging.INFO if args.verbose else logging.WARNING)
    if args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    _setup_logging(args)
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "validate":
            cfg = parse_config(DEFAULT_VALIDATE_CONFIG)
        elif args.command != "convert":
            raise ConfigError(f"the {args.command} command needs --config")
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = args.out or (cfg["output.path"] if cfg else None)
        strategy = args.strategy or (cfg["numerics.strategy"] if cfg else "series")
        if args.command == "sweep":
            return cmd_sweep(cfg, out, strategy, threads)
        if args.command == "trajectory":
            return cmd_trajectory(cfg, out, args.mode or cfg["trajectory.mode"], strategy, threads)
        if args.command == "validate":
            return cmd_validate(cfg, args.inject_fault, out)
        if args.command == "tc":
            return cmd_tc(cfg, out)
        args.out = out
        return cmd_convert(args, cfg)
    except (ConfigError, UsageError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (StochCoolError, ArithmeticError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
