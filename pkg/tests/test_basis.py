import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from stochcool.basis import (BasisCutoff, WindowRegion, commutator_defect, eigenfunctions, eigenvalue_range,
                             eval_eigenfunction, momentum_matrix, operator_factors, position_matrix,
                             position_momentum_commutator, projector_defect, window_overlap_closed_form,
                             window_overlap_matrix)
from stochcool.errors import ConvergenceError, DomainError
from stochcool.units import DQ0

# reference values: Hermite functions and overlaps at 40 digits (mpmath)
PSI_REFERENCE = [
    (0, 0.0, 0.75112554446494248286),
    (5, 0.7, 0.32729676349851072921),
    (40, 3.1, -0.16298901898871313221),
    (200, -12.5, 0.18033913118056430391),
    (1000, 20.0, -0.12592111727882789928),
]
CENTERED_OVERLAPS = {(0, 0): 0.38292492254802620728, (0, 2): -0.24894777997569386458,
                     (1, 1): 0.030859595783726729501, (2, 2): 0.16288409332033903367,
                     (3, 5): -0.044487373616392184238, (10, 10): 0.047602381001294781708}
SHIFTED_OVERLAPS = {(0, 0): 3.3786835622641726823e-6, (3, 4): 0.0094502794599135425574,
                    (12, 12): 0.072390654640263942922}

CENTERED = (-0.5 * DQ0, 0.5 * DQ0)


@pytest.mark.parametrize("n, x, expected", PSI_REFERENCE)
def test_eigenfunction_values(n, x, expected):
    assert eval_eigenfunction(n, x) == pytest.approx(expected, rel=1e-11, abs=1e-14)


def test_eigenfunctions_orthonormal():
    # Gauss-Hermite nodes integrate psi_m psi_n e^{x^2} exactly
    x, w = np.polynomial.hermite.hermgauss(80)
    psi = eigenfunctions(60, x) * np.sqrt(w * np.exp(x**2))
    assert np.abs(psi @ psi.T - np.eye(61)).max() < 1e-12


def test_high_level_norm():
    x = np.linspace(-60, 60, 200001)
    psi = eval_eigenfunction(1000, x)
    assert np.trapezoid(psi**2, x) == pytest.approx(1.0, abs=1e-9)


def test_negative_level_rejected():
    with pytest.raises(DomainError):
        eval_eigenfunction(-1, 0.0)


@pytest.mark.parametrize("n_max", [-1, 2.5])
def test_invalid_cutoff(n_max):
    with pytest.raises(DomainError):
        BasisCutoff(n_max)


def test_centered_overlaps():
    A = window_overlap_matrix(CENTERED, 12)
    for (m, n), value in CENTERED_OVERLAPS.items():
        assert A[m, n] == pytest.approx(value, rel=1e-10)
    assert A[0, 0] == pytest.approx(erf(1 / (2 * math.sqrt(2))), rel=1e-13)
    # parity: odd m + n vanish for a symmetric window
    m, n = np.indices(A.shape)
    assert np.abs(A[(m + n) % 2 == 1]).max() < 1e-14


def test_shifted_overlaps():
    A = window_overlap_matrix((4.5 * DQ0, 5.5 * DQ0), 12)
    for (m, n), value in SHIFTED_OVERLAPS.items():
        assert A[m, n] == pytest.approx(value, rel=1e-9)


def test_closed_form_agrees_with_quadrature():
    interval = (-0.3, 1.1)
    A = window_overlap_matrix(interval, 40)
    B = window_overlap_closed_form(interval, 40)
    off = ~np.eye(41, dtype=bool)
    assert np.abs(A[off] - B[off]).max() < 1e-12
    assert np.isnan(np.diag(B)).all()


def test_full_and_empty_windows():
    assert np.array_equal(window_overlap_matrix((-math.inf, math.inf), 5), np.eye(6))
    assert not window_overlap_matrix((1.0, 1.0), 5).any()
    f = operator_factors(WindowRegion(0, 0, 0.0, 0.5), 4)
    assert WindowRegion(0, 0, 0.0, 0.5).is_empty
    assert not f.A_x.any()


def test_reversed_interval_rejected():
    with pytest.raises(DomainError):
        window_overlap_matrix((1.0, 0.0), 3)


def test_quadrature_failure_is_reported():
    with pytest.raises(ConvergenceError, match="did not reach"):
        window_overlap_matrix((-3.0, 2.0), 60, rtol=1e-30, max_refinements=1)


def test_operator_factors_mirror_and_readonly():
    f = operator_factors(WindowRegion(1.3, -1.3, 0.4, 0.4), 10)
    direct = window_overlap_matrix(((-1.3 - 0.4) * DQ0, (-1.3 + 0.4) * DQ0), 10)
    assert np.abs(f.A_y - direct).max() < 1e-12
    with pytest.raises(ValueError):
        f.A_x[0, 0] = 1.0


def test_momentum_and_position_matrices():
    p, q = momentum_matrix(6), position_matrix(6)
    assert np.allclose(p, p.conj().T)
    assert np.allclose(q, q.T)
    comm = position_momentum_commutator(6)
    # i on the diagonal except the truncation corner
    assert np.allclose(np.diag(comm)[:-1], 1j)
    assert np.diag(comm)[-1] == pytest.approx(-6j)


def test_projector_defect_decreases_with_cutoff():
    defects = [projector_defect(window_overlap_matrix(CENTERED, n)) for n in (12, 24, 48)]
    assert defects[0] > defects[1] > defects[2]


def test_commutator_defect_matches_brute_force():
    f = operator_factors(WindowRegion(0.4, -0.2, 0.5, 0.7), 5)
    big = np.abs(np.kron(f.A_x @ f.A_x, f.A_y @ f.A_y) - np.kron(f.A_x, f.A_y)).max()
    assert commutator_defect(f.A_x, f.A_y) == pytest.approx(big, rel=1e-12)


interval_ends = st.floats(min_value=-6.0, max_value=6.0, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(a=interval_ends, b=interval_ends, c=interval_ends)
def test_overlap_additivity_and_spectrum(a, b, c):
    a, b, c = sorted((a, b, c))
    Aab = window_overlap_matrix((a, b), 10)
    Abc = window_overlap_matrix((b, c), 10)
    Aac = window_overlap_matrix((a, c), 10)
    assert np.abs(Aab + Abc - Aac).max() < 1e-9
    assert np.allclose(Aac, Aac.T)
    lo, hi = eigenvalue_range(Aac)
    assert lo > -1e-10 and hi < 1 + 1e-10


@settings(max_examples=20, deadline=None)
@given(center=st.floats(-4, 4), half=st.floats(0.05, 3))
def test_window_and_complement_sum_to_identity(center, half):
    lo, hi = (center - half) * DQ0, (center + half) * DQ0
    total = (window_overlap_matrix((-math.inf, lo), 8) + window_overlap_matrix((lo, hi), 8)
             + window_overlap_matrix((hi, math.inf), 8))
    assert np.abs(total - np.eye(9)).max() < 1e-9
