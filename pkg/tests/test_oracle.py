import numpy as np
import pytest

from stochcool.errors import CapacityError, DomainError
from stochcool.oracle import (bilinear_operator, boltzmann_weights, fock_states, partition_function,
                              thermal_expectation, toy_occupations, toy_system)


def test_single_mode_geometric_mean():
    # the truncated tail only enters below 1e-12 relative with a 1e-16 cap tail
    beta, mu = 0.7, 1.2
    system = toy_system([(0, 0, 1)], beta, mu, tail=1e-16)
    n = thermal_expectation(system, [np.array([[1.0]])])
    assert n.real == pytest.approx(1 / np.expm1(beta * (2.5 - mu)), rel=1e-12)
    assert n.imag == 0


def test_single_mode_second_moment():
    # <n^2> = f (1 + 2 f) for a geometric distribution
    system = toy_system([(0, 0, 0)], 2.0, 1.2, tail=1e-16)
    f = toy_occupations(system)[0]
    n2 = thermal_expectation(system, [np.eye(1), np.eye(1)])
    assert n2.real == pytest.approx(f * (1 + 2 * f), rel=1e-12)


def test_partition_function_factorizes():
    system = toy_system([(0, 0, 0), (1, 0, 0), (0, 0, 1)], 1.3, 1.0)
    Z_enum, Z_prod = partition_function(system)
    assert Z_enum == pytest.approx(Z_prod, rel=1e-12)


def test_zero_temperature_vacuum():
    system = toy_system([(0, 0, 0), (0, 0, 1)], 60.0, 0.5)
    W = np.array([[0.3, 0.1], [0.1, 0.2]])
    assert abs(thermal_expectation(system, [W])) < 1e-20
    P = np.array([[0, -0.4j], [0.4j, 0]])
    assert abs(thermal_expectation(system, [P, P])) < 1e-20


def test_hopping_operator_matrix_elements():
    system = toy_system([(0, 0, 0), (0, 0, 1)], 1.0, 0.0, max_cap=50)
    K = np.array([[0.0, 1.0], [0.0, 0.0]])  # a_0^dag a_1
    op = bilinear_operator(system, K).toarray()
    states = [tuple(s) for s in fock_states(system)]
    src = states.index((1, 2))
    dst = states.index((2, 1))
    assert op[dst, src] == pytest.approx(np.sqrt(2 * 2))


def test_weights_normalized():
    system = toy_system([(0, 0, 0), (0, 1, 0)], 0.8, 1.0)
    assert boltzmann_weights(system).sum() == pytest.approx(1.0, abs=1e-15)


def test_state_limit_and_domain():
    with pytest.raises(CapacityError):
        toy_system([(0, 0, 0), (0, 0, 1), (0, 1, 0)], 1.0, 1.5 - 0.01, max_states=10**5)
    with pytest.raises(DomainError):
        toy_system([(0, 0, 0)], 1.0, 2.0)
    with pytest.raises(DomainError):
        toy_system([(0, 0, 0)], -1.0, 0.0)
