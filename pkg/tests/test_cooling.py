import numpy as np
import pytest

from stochcool.basis import WindowRegion
from stochcool.cooling import (STOP_BUDGET, STOP_FLOOR, STOP_GROUND, STOP_HEATING, STOP_STALLED, STOP_TARGET,
                               LoopConfig, WindowSchedule, log_spaced_steps, run_trajectory, single_step)
from stochcool.errors import ConvergenceError, DomainError, UsageError
from stochcool.thermo import critical_temperature_estimate, solve_chemical_potential, total_energy

N = 1000.0
T0 = critical_temperature_estimate(N)


def test_empty_window_leaves_temperature():
    T_next, rec = single_step(12.0, N, WindowRegion(0, 0, 0.0, 0.0))
    assert T_next == pytest.approx(12.0, rel=1e-12)
    assert rec.breakdown.total == 0.0


def test_cooling_step_lowers_temperature():
    T_next, rec = single_step(2 * T0, N, WindowRegion.centered())
    assert rec.breakdown.total < 0
    assert T_next < 2 * T0


def test_energy_bookkeeping_small_system():
    # ten atoms, n_max = 8: the re-equilibrated energy differs by exactly dE
    for T in (1.5, 3.0):
        T_next, rec = single_step(T, 10.0, WindowRegion.centered(2.0), cutoff=8)
        E_next = total_energy(solve_chemical_potential(T_next, 10.0, 8, strict=False))
        assert E_next - rec.E == pytest.approx(rec.breakdown.total, abs=1e-10)


def test_clamp_to_ground_state(monkeypatch):
    # the physical dE never overshoots, so substitute an oversized energy drop
    import stochcool.cooling as cooling
    from stochcool.feedback import EnergyChangeBreakdown, evaluate_feedback

    def overshoot(eq, window, policy=None, strategy="series", factors=None, **kw):
        ev = evaluate_feedback(eq, window, policy, strategy, factors, **kw)
        b = EnergyChangeBreakdown(0.0, 0.0, 0.0, -10 * total_energy(eq))
        return type(ev)(b, ev.correlators, ev.params)

    monkeypatch.setattr(cooling, "evaluate_feedback", overshoot)
    T_next, rec = single_step(3.0, 20.0, WindowRegion.centered(), cutoff=30)
    assert T_next == 0.0 and rec.clamped
    tr = run_trajectory(LoopConfig(T_start=3.0, N_tot=20.0, mode="exact", n_max=30))
    assert tr.stop_reason == STOP_GROUND
    assert tr.final.T == 0.0 and tr.final.clamped


def test_invalid_temperature():
    with pytest.raises(DomainError):
        single_step(0.0, N, WindowRegion.centered())


def test_schedule():
    s = WindowSchedule.move_out(N)
    assert s.switch_T == pytest.approx(1.2 * T0)
    assert s.window_at(1.3 * T0) == WindowRegion.centered()
    assert s.window_at(1.1 * T0) == WindowRegion.shifted(5.0)
    with pytest.raises(UsageError):
        WindowSchedule(WindowRegion.centered(), WindowRegion.shifted(), None)


@pytest.mark.parametrize("bad", [dict(max_steps=0), dict(mode="warp"), dict(T_start=-1.0),
                                 dict(max_records=1), dict(stall_fraction=1.5)])
def test_invalid_loop_config(bad):
    kwargs = dict(T_start=2 * T0, N_tot=N)
    kwargs.update(bad)
    with pytest.raises((UsageError, DomainError)):
        LoopConfig(**kwargs)


def test_log_spaced_steps():
    steps = log_spaced_steps(10**7, 10_000)
    assert len(steps) == 10_000
    assert steps[0] == 0 and steps[1] == 1 and steps[-1] == 10**7
    assert np.all(np.diff(steps) > 0)
    assert np.array_equal(log_spaced_steps(5, 100), np.arange(6))


def test_start_below_target_gives_single_record():
    tr = run_trajectory(LoopConfig(T_start=5.0, N_tot=N, T_target=6.0, mode="exact"))
    assert tr.stop_reason == STOP_TARGET
    assert len(tr.records) == 1 and tr.steps == 0


def test_modes_agree_on_short_run():
    base = dict(T_start=1.5 * T0, N_tot=N, T_target=1.45 * T0)
    exact = run_trajectory(LoopConfig(mode="exact", **base))
    grid = run_trajectory(LoopConfig(mode="grid", **base))
    ode = run_trajectory(LoopConfig(mode="ode", **base))
    assert exact.stop_reason == grid.stop_reason == ode.stop_reason == STOP_TARGET
    assert grid.steps == pytest.approx(exact.steps, rel=0.02)
    assert ode.steps == pytest.approx(exact.steps, rel=0.05)
    assert grid.grid_error < 1e-3
    # monotone cooling while dE < 0
    T = [r.T for r in exact.records]
    E = [r.E for r in exact.records]
    assert np.all(np.diff(T) < 0) and np.all(np.diff(E) < 0)
    for a, b in zip(exact.records, exact.records[1:]):
        if b.step == a.step + 1:
            assert b.E - a.E == pytest.approx(a.breakdown.total, rel=1e-12)


def test_step_budget_and_thinning():
    tr = run_trajectory(LoopConfig(T_start=1.5 * T0, N_tot=N, mode="exact", max_steps=40, max_records=10))
    assert tr.stop_reason == STOP_BUDGET
    assert tr.steps == 40
    assert len(tr.records) <= 10
    assert tr.records[0].step == 0 and tr.records[-1].step == 40


def test_stall_stops_run():
    tr = run_trajectory(LoopConfig(T_start=0.85 * T0, N_tot=N, mode="grid", stall_fraction=0.5))
    assert tr.stop_reason in (STOP_STALLED, STOP_HEATING)
    assert tr.final.breakdown.total >= -0.5 * abs(tr.records[0].breakdown.total) * 1.01


def test_heating_at_start():
    # ten atoms heat from the start: window number fluctuations dominate
    tr = run_trajectory(LoopConfig(T_start=8.0, N_tot=10.0, mode="exact"))
    assert tr.stop_reason == STOP_HEATING
    assert len(tr.records) == 1


def test_floor_reached_in_grid_mode():
    tr = run_trajectory(LoopConfig(T_start=1.5 * T0, N_tot=N, mode="grid", floor_ratio=1.45,
                                   schedule=WindowSchedule.fixed(WindowRegion.shifted())))
    assert tr.stop_reason == STOP_FLOOR
    assert tr.final.T == pytest.approx(1.45 * T0, rel=1e-3)


def test_grid_failure_is_loud():
    cfg = LoopConfig(T_start=1.5 * T0, N_tot=N, T_target=0.5 * T0, mode="grid", grid_points=5,
                     grid_max_points=9, grid_rtol=1e-12)
    with pytest.raises(ConvergenceError, match="interpolation error"):
        run_trajectory(cfg)

