"""Brute-force grand-canonical expectation values on small Fock spaces.

Only used for validation: bilinear operators are built as explicit sparse
matrices over every occupation-number state of a handful of modes, and
thermal averages are taken by summing Boltzmann weights over those states.
Nothing here relies on Wick's theorem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .correlators import KroneckerKernel
from .errors import CapacityError, DomainError

MAX_STATES = 10**7
TAIL = 1e-12
# cap tail used when comparing with the Wick formulas; high moments of the
# dropped occupations would otherwise show up near the 1e-8 level
COMPARISON_TAIL = 1e-16


@dataclass(frozen=True)
class ToySystem:
    """A few bosonic modes with per-mode occupancy caps.

    ``modes`` are the 1D quantum-number triples of the retained cube modes,
    ``energies`` their single-particle energies.
    """

    modes: tuple
    energies: np.ndarray
    caps: tuple
    beta: float
    mu: float

    @property
    def n_states(self) -> int:
        return math.prod(c + 1 for c in self.caps)

    def tail_weights(self) -> np.ndarray:
        """Per-mode probability of occupations beyond the cap."""
        x = np.exp(-self.beta * (self.energies - self.mu))
        return x ** (np.array(self.caps) + 1)


def toy_system(modes: Sequence[Sequence[int]], beta: float, mu: float, tail: float = TAIL,
               max_cap: int = 10**6, max_states: int = MAX_STATES) -> ToySystem:
    """Build a toy system, choosing each cap so its geometric tail is below ``tail``."""
    modes = tuple(tuple(int(v) for v in m) for m in modes)
    energies = np.array([sum(m) + 1.5 for m in modes], dtype=float)
    if not beta > 0 or not np.all(energies > mu):
        raise DomainError("need beta > 0 and mu below every mode energy")
    x = np.exp(-beta * (energies - mu))
    caps = tuple(max(1, math.ceil(math.log(tail) / math.log(xi)) - 1) if xi > 0 else 1 for xi in x)
    if max(caps) > max_cap:
        raise CapacityError(f"occupancy cap {max(caps)} exceeds the limit {max_cap}")
    system = ToySystem(modes, energies, caps, float(beta), float(mu))
    if system.n_states > max_states:
        raise CapacityError(f"{system.n_states} Fock states exceed the limit {max_states}")
    return system


def fock_states(system: ToySystem) -> np.ndarray:
    """All occupation tuples, shape (n_states, n_modes), in mixed-radix order."""
    grids = np.indices([c + 1 for c in system.caps]).reshape(len(system.caps), -1)
    return grids.T


def _strides(caps):
    strides = np.ones(len(caps), dtype=np.int64)
    for k in range(len(caps) - 2, -1, -1):
        strides[k] = strides[k + 1] * (caps[k + 1] + 1)
    return strides


def bilinear_operator(system: ToySystem, kernel: np.ndarray) -> sparse.csr_matrix:
    """Sparse matrix of sum_ij kernel[i, j] a_i^dag a_j on the truncated Fock space.

    Transitions that would push a mode above its cap are dropped; the
    weight of such states is below the tail tolerance.
    """
    kernel = np.asarray(kernel)
    states = fock_states(system)
    S, m = states.shape
    strides = _strides(system.caps)
    caps = np.array(system.caps)
    rows, cols, vals = [], [], []
    idx = np.arange(S)
    for i in range(m):
        for j in range(m):
            k = kernel[i, j]
            if k == 0:
                continue
            if i == j:
                rows.append(idx)
                cols.append(idx)
                vals.append(k * states[:, i].astype(complex))
                continue
            ok = (states[:, j] > 0) & (states[:, i] < caps[i])
            src = idx[ok]
            amp = np.sqrt(states[ok, j] * (states[ok, i] + 1.0))
            dst = src - strides[j] + strides[i]
            rows.append(dst)
            cols.append(src)
            vals.append(k * amp.astype(complex))
    if not rows:
        return sparse.csr_matrix((S, S), dtype=complex)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(S, S))


def boltzmann_weights(system: ToySystem) -> np.ndarray:
    """Normalized grand-canonical weights of every Fock state."""
    states = fock_states(system)
    log_w = -system.beta * (states @ (system.energies - system.mu))
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def partition_function(system: ToySystem):
    """(Z by enumeration, Z as the product of per-mode truncated geometric sums)."""
    states = fock_states(system)
    Z_enum = float(np.exp(-system.beta * (states @ (system.energies - system.mu))).sum())
    x = np.exp(-system.beta * (system.energies - system.mu))
    Z_prod = float(np.prod((1 - x ** (np.array(system.caps) + 1)) / (1 - x)))
    return Z_enum, Z_prod


def thermal_expectation(system: ToySystem, kernels: Sequence[np.ndarray]) -> complex:
    """<O_1 O_2 ... O_k> for the bilinears with the given single-particle kernels."""
    if max(system.tail_weights()) > 10 * TAIL:
        raise CapacityError("occupancy caps leave a tail above tolerance")
    ops = [bilinear_operator(system, K) for K in kernels]
    p = boltzmann_weights(system)
    if len(ops) == 1:
        return complex(p @ ops[0].diagonal())
    rest = ops[1]
    for op in ops[2:]:
        rest = rest @ op
    # diag(O_1 R)_s = sum_t (O_1)_st R_ts
    diag = np.asarray(ops[0].multiply(rest.T.tocsr()).sum(axis=1)).ravel()
    return complex(p @ diag)


def toy_kernel(kernel: KroneckerKernel, modes: Sequence[Sequence[int]]) -> np.ndarray:
    """Restriction of a cube-mode Kronecker kernel to the listed modes."""
    X, Y, Z = kernel.factors
    m = np.asarray(modes)
    mat = X[np.ix_(m[:, 0], m[:, 0])] * Y[np.ix_(m[:, 1], m[:, 1])] * Z[np.ix_(m[:, 2], m[:, 2])]
    return kernel.scale * mat


def toy_occupations(system: ToySystem) -> np.ndarray:
    """Exact Bose factors of the toy modes."""
    return 1.0 / np.expm1(system.beta * (system.energies - system.mu))


def exact_moments(system: ToySystem, W: np.ndarray, P: np.ndarray):
    """(<N>, <P^2>, <N P^2>) by enumeration."""
    n = thermal_expectation(system, [W])
    p2 = thermal_expectation(system, [P, P])
    np2 = thermal_expectation(system, [W, P, P])
    return n, p2, np2


@dataclass(frozen=True)
class ToyCase:
    """A randomized toy comparison: window, cube cutoff, modes and thermal state."""

    window: object
    n_max: int
    modes: tuple
    beta: float
    mu: float


def random_toy_cases(count: int, seed: int = 12345, n_max: int = 3,
                     max_states: int = 300_000):
    """Reproducible toy systems with 2 or 3 modes coupled by the window momentum.

    The second mode differs from the first by one z quantum so that P_w has
    a non-zero matrix element; a third mode, if present, is drawn freely.
    """
    from .basis import WindowRegion

    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < count:
        window = WindowRegion(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                              rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5))
        first = rng.integers(0, n_max + 1, size=3)
        first[2] = min(first[2], n_max - 1)
        second = first.copy()
        second[2] += 1
        modes = [tuple(int(v) for v in first), tuple(int(v) for v in second)]
        if rng.random() < 0.5:
            third = tuple(int(v) for v in rng.integers(0, n_max + 1, size=3))
            if third not in modes:
                modes.append(third)
        energies = np.array([sum(m) + 1.5 for m in modes])
        beta = float(rng.uniform(0.3, 3.0))
        gap = float(np.exp(rng.uniform(np.log(0.05), np.log(1.5))))
        mu = float(energies.min() - gap / beta)
        try:
            toy_system(modes, beta, mu, tail=COMPARISON_TAIL, max_states=max_states)
        except CapacityError:
            continue
        cases.append(ToyCase(window, n_max, tuple(modes), beta, mu))
    return cases


def compare_with_wick(case: ToyCase, flip_sextic_sign: bool = False) -> dict:
    """Relative differences between enumeration and the Wick formulas.

    Keys: ``mean_Nw``, ``mean_Pw2``, ``connected`` (the number-momentum
    correlator at N_e = <N_w>), and ``imag`` (largest imaginary part of the
    enumerated Hermitian expectations).
    """
    from .basis import operator_factors
    from .correlators import wick_moments, window_kernels

    kernels = window_kernels(operator_factors(case.window, case.n_max))
    W = toy_kernel(kernels["N"], case.modes)
    P = toy_kernel(kernels["P"], case.modes)
    system = toy_system(case.modes, case.beta, case.mu, tail=COMPARISON_TAIL)
    n, p2, np2 = exact_moments(system, W, P)
    wn, wp2, wc = wick_moments(W, P, toy_occupations(system), flip_sextic_sign=flip_sextic_sign)
    exact_conn = np2.real - n.real * p2.real

    def rel(a, b):
        scale = max(abs(a), abs(b))
        return 0.0 if scale == 0 else abs(a - b) / scale

    return {"mean_Nw": rel(n.real, wn), "mean_Pw2": rel(p2.real, wp2), "connected": rel(exact_conn, wc),
            "imag": max(abs(n.imag), abs(p2.imag), abs(np2.imag))}
