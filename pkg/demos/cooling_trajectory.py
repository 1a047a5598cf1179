"""Cool a trapped sodium gas from 7.6 uK down to the condensation temperature.

The window sits at the trap center until T = 1.2 T0 and then moves out so
the condensate is not disturbed. Steps are integrated as a continuum in
ln T; pass --exact to iterate every single operation instead (only
practical for a few thousand atoms). Smaller gases start further above
T0 at 7.6 uK and need larger basis cutoffs, so use --start-T0 for them.

    python3 demos/cooling_trajectory.py                  # 10^6 atoms, about 5 minutes
    python3 demos/cooling_trajectory.py --atoms 1e3 --start-T0 1.5 --exact
"""

import argparse
import time

from stochcool import LoopConfig, PhysicalConfig, WindowSchedule, critical_temperature_estimate
from stochcool import run_trajectory
from stochcool.units import microkelvin_to_trap_units, trap_units_to_microkelvin


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--atoms", type=float, default=1e6)
    ap.add_argument("--start-uK", type=float, default=7.6)
    ap.add_argument("--start-T0", type=float, default=None, help="start temperature in units of T0")
    ap.add_argument("--exact", action="store_true")
    args = ap.parse_args()

    phys = PhysicalConfig.from_frequency(500.0)
    N = args.atoms
    T0 = critical_temperature_estimate(N)
    T_start = args.start_T0 * T0 if args.start_T0 else microkelvin_to_trap_units(args.start_uK, phys)
    T_target = 1.3 * T0 if args.exact else T0
    cfg = LoopConfig(T_start=T_start, N_tot=N, T_target=T_target, mode="exact" if args.exact else "ode",
                     schedule=WindowSchedule.move_out(N))

    t = time.perf_counter()
    tr = run_trajectory(cfg)
    print(f"N_tot = {N:g}: {T_start / T0:.2f} T0 -> {tr.final.T / T0:.3f} T0 "
          f"({trap_units_to_microkelvin(tr.final.T, phys):.3f} uK)")
    print(f"{tr.steps:.4g} feedback operations, stop reason '{tr.stop_reason}', "
          f"{time.perf_counter() - t:.1f} s")
    for rec in tr.records[:: max(1, len(tr.records) // 12)]:
        print(f"  step {rec.step:>12.0f}  T/T0 {rec.T / T0:7.3f}  dE {rec.breakdown.total:+.3e}  "
              f"<N_w> {rec.mean_Nw:9.3f}")


if __name__ == "__main__":
    main()
