import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochcool.errors import CapacityError, DomainError
from stochcool.thermo import (ZETA3, check_capacity, condensate_statistics, condensation_crossover,
                              critical_temperature_estimate, excitation_energy, fugacity_series,
                              ground_state, heat_capacity, invert_energy_to_temperature, level_degeneracy,
                              occupation_series, required_cutoff, solve_chemical_potential, total_energy)


def test_level_degeneracy_counts_cube_modes():
    g = level_degeneracy(3)
    brute = np.zeros(10, dtype=int)
    for nx in range(4):
        for ny in range(4):
            for nz in range(4):
                brute[nx + ny + nz] += 1
    assert np.array_equal(g, brute)
    assert g.sum() == 64


def test_single_mode_chemical_potential():
    # one mode holding one atom on average: f = 1 means exp((3/2 - mu)/T) = 2
    for T in (0.1, 1.0, 7.0):
        eq = solve_chemical_potential(T, 1.0, 0)
        assert eq.mu == pytest.approx(1.5 - T * math.log(2), rel=1e-14)
        assert eq.ground_occupation == pytest.approx(1.0, rel=1e-14)


def test_small_cube_reference():
    # 27 modes, N = 3, T = 1.7, root found independently at 40 digits
    eq = solve_chemical_potential(1.7, 3.0, 2, strict=False)
    assert eq.mu == pytest.approx(-0.14329076571064662292, rel=1e-13)
    assert total_energy(eq) == pytest.approx(9.6365722416145996285, rel=1e-14)


@pytest.mark.parametrize("T, N", [(0.05, 10.0), (2.0, 1e3), (9.41, 1e3), (30.0, 1e4), (50.0, 100.0),
                                  (90.0, 1e6)])
def test_number_constraint(T, N):
    eq = solve_chemical_potential(T, N, required_cutoff(T, N))
    assert abs(eq.mean_number - N) <= 1e-9 * N
    assert eq.mu < 1.5


def test_capacity_rule():
    T, N = 40.0, 1e4
    need = required_cutoff(T, N)
    check_capacity(solve_chemical_potential(T, N, need))
    with pytest.raises(CapacityError, match="n_max >="):
        solve_chemical_potential(T, N, need.n_max // 2)


@pytest.mark.parametrize("T, N", [(-1.0, 10.0), (0.0, 10.0), (1.0, 0.0)])
def test_invalid_state(T, N):
    with pytest.raises(DomainError):
        solve_chemical_potential(T, N, 3)


def test_ground_state():
    eq = ground_state(50.0, 4)
    assert eq.condensate_fraction == 1.0
    assert total_energy(eq) == pytest.approx(75.0)
    assert invert_energy_to_temperature(75.0, 50.0, 4) == 0.0
    with pytest.raises(DomainError):
        invert_energy_to_temperature(74.0, 50.0, 4)


@pytest.mark.parametrize("T, N", [(0.3, 20.0), (4.0, 1e3), (12.0, 1e3), (60.0, 1e4)])
def test_energy_temperature_round_trip(T, N):
    cutoff = required_cutoff(T, N)
    E = total_energy(solve_chemical_potential(T, N, cutoff))
    assert invert_energy_to_temperature(E, N, cutoff) == pytest.approx(T, rel=1e-7)


def test_equipartition_limit():
    T, N = 50.0, 100.0
    eq = solve_chemical_potential(T, N, required_cutoff(T, N))
    assert excitation_energy(eq) == pytest.approx(3 * N * T, rel=0.05)


def test_heat_capacity_matches_finite_difference():
    N = 1e3
    cutoff = required_cutoff(15.0, N)
    h = 1e-4
    for T in (3.0, 9.0, 14.0):
        dE = (total_energy(solve_chemical_potential(T + h, N, cutoff))
              - total_energy(solve_chemical_potential(T - h, N, cutoff))) / (2 * h)
        assert heat_capacity(solve_chemical_potential(T, N, cutoff)) == pytest.approx(dE, rel=1e-6)


def test_semiclassical_temperature():
    assert critical_temperature_estimate(1e3) == pytest.approx((1e3 / ZETA3) ** (1 / 3), rel=1e-15)
    assert critical_temperature_estimate(1e3) == pytest.approx(9.41, abs=0.01)


def test_condensation_crossover_near_semiclassical():
    N = 1e3
    T0 = critical_temperature_estimate(N)
    Tc = condensation_crossover(N, required_cutoff(2 * T0, N))
    assert abs(Tc - T0) / T0 < 0.1
    # finite-size shift lowers the crossover
    assert Tc < T0


def test_condensate_fluctuations_are_large():
    eq = solve_chemical_potential(5.0, 1e3, required_cutoff(5.0, 1e3))
    mean, var = condensate_statistics(eq)
    assert var == pytest.approx(mean * (1 + mean))
    assert math.sqrt(var) > 0.5 * mean


def test_fugacity_series_converges_to_bose_factor():
    eq = solve_chemical_potential(3.0, 200.0, 25)
    for terms in (1, 5, 40):
        s = occupation_series(eq, terms)
        assert np.allclose(s.total(), eq.occupations, rtol=1e-12, atol=0)
        assert np.allclose(s.total(with_identity=True), 1 + eq.occupations, rtol=1e-12)
    generic = fugacity_series(eq.beta, eq.mu, eq.energies, 30, eq.degeneracy)
    assert np.allclose(generic.total(), eq.occupations, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(T=st.floats(0.2, 40.0), logN=st.floats(0.0, 5.0))
def test_number_and_monotone_energy(T, logN):
    N = 10.0 ** logN
    cutoff = required_cutoff(1.1 * T, N)
    eq = solve_chemical_potential(T, N, cutoff)
    hotter = solve_chemical_potential(1.1 * T, N, cutoff)
    assert abs(eq.mean_number - N) <= 1e-9 * N
    assert total_energy(hotter) > total_energy(eq)
    assert 0 <= eq.condensate_fraction <= 1
