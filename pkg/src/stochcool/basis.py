"""Harmonic-oscillator eigenfunctions and truncated single-particle matrices.

The feedback operators N_w, P_w and Q_w are second-quantized bilinears whose
single-particle kernels factor over the Cartesian axes. In the truncated
oscillator basis {0..n_max} per axis they become Kronecker products

    N_w -> A_x (x) A_y (x) 1,   P_w -> A_x (x) A_y (x) p,   Q_w -> A_x (x) A_y (x) q / N_e

with A the overlap matrix of the 1D eigenfunctions over the window interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial import ConvexHull, QhullError

from .errors import ConvergenceError, DomainError
from .units import DQ0

_RESCALE = 1e100
_LOG_RESCALE = math.log(_RESCALE)


@dataclass(frozen=True)
class BasisCutoff:
    """Highest retained 1D quantum number; the 3D mode set is {0..n_max}^3."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise DomainError(f"n_max must be a non-negative integer, got {self.n_max!r}")

    @property
    def size(self) -> int:
        return self.n_max + 1


CutoffLike = Union[int, BasisCutoff]


def as_cutoff(cutoff: CutoffLike) -> BasisCutoff:
    return cutoff if isinstance(cutoff, BasisCutoff) else BasisCutoff(int(cutoff))


@dataclass(frozen=True)
class WindowRegion:
    """Rectangular feedback region in the xy-plane, unrestricted along z.

    Offsets and half-widths are in units of the ground-state width dq0. A zero
    half-width along either axis gives the empty window; ``inf`` half-widths
    give the whole plane.
    """

    x_center: float = 0.0
    y_center: float = 0.0
    x_half_width: float = 0.5
    y_half_width: float = 0.5

    def __post_init__(self):
        if not (self.x_half_width >= 0 and self.y_half_width >= 0):
            raise DomainError("window half-widths must be non-negative")

    @classmethod
    def centered(cls, width: float = 1.0) -> "WindowRegion":
        return cls(0.0, 0.0, width / 2, width / 2)

    @classmethod
    def shifted(cls, offset: float = 5.0, width: float = 1.0) -> "WindowRegion":
        """Window of the given full width displaced along x by ``offset`` dq0."""
        return cls(offset, 0.0, width / 2, width / 2)

    @classmethod
    def full(cls) -> "WindowRegion":
        return cls(0.0, 0.0, math.inf, math.inf)

    @property
    def is_empty(self) -> bool:
        return self.x_half_width == 0 or self.y_half_width == 0

    def intervals(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """Return the x and y intervals in trap units."""
        def one(center, half):
            if math.isinf(half):
                return (-math.inf, math.inf)
            return ((center - half) * DQ0, (center + half) * DQ0)
        return one(self.x_center, self.x_half_width), one(self.y_center, self.y_half_width)


def eval_eigenfunction(n: int, x):
    """Normalized 1D Hermite function psi_n(x) in trap units.

    Uses the three-term recurrence on normalized functions, carrying a
    per-point logarithmic scale so that the Gaussian factor never underflows
    before the polynomial part has grown.
    """
    if n < 0:
        raise DomainError(f"level must be non-negative, got {n}")
    x = np.asarray(x, dtype=float)
    return eigenfunctions(n, x)[n]


def eigenfunctions(n_max: int, x) -> np.ndarray:
    """All psi_0..psi_{n_max} at points ``x``; shape ``(n_max + 1,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    log_scale = -0.5 * x**2 - 0.25 * math.log(math.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    with np.errstate(divide="ignore", under="ignore"):
        out[0] = _unscale(cur, log_scale)
        for k in range(n_max):
            nxt = math.sqrt(2.0 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
            prev, cur = cur, nxt
            big = np.abs(cur) > _RESCALE
            if big.any():
                cur = np.where(big, cur / _RESCALE, cur)
                prev = np.where(big, prev / _RESCALE, prev)
                log_scale = np.where(big, log_scale + _LOG_RESCALE, log_scale)
            out[k + 1] = _unscale(cur, log_scale)
    return out


def _unscale(value, log_scale):
    return np.sign(value) * np.exp(np.log(np.abs(value)) + log_scale)


def _support_radius(n_max: int) -> float:
    # psi_n(x)^2 < 1e-60 beyond the turning point by this margin for n <= n_max
    return math.sqrt(2 * n_max + 1) + 12.0


def window_overlap_matrix(interval, cutoff: CutoffLike, rtol: float = 1e-10,
                          order: int = 40, max_refinements: int = 12) -> np.ndarray:
    """Overlap matrix A_mn = int_a^b psi_m psi_n dx.

    Composite Gauss-Legendre quadrature; the panel count is doubled until
    two successive results agree to ``rtol`` (relative to max(1, max|A|)).
    The interval ``(-inf, inf)`` returns the identity and an empty interval
    returns zeros.
    """
    a, b = map(float, interval)
    if not a <= b:
        raise DomainError(f"interval must satisfy a <= b, got ({a}, {b})")
    M = as_cutoff(cutoff).size
    if a == -math.inf and b == math.inf:
        return np.eye(M)
    R = _support_radius(M - 1)
    a, b = max(a, -R), min(b, R)
    if a >= b:
        return np.zeros((M, M))

    nodes, weights = leggauss(order)

    def integrate(panels):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel()
        psi = eigenfunctions(M - 1, x)
        return (psi * w) @ psi.T

    # roughly ten local wavelengths of psi_m psi_n per panel
    panels = max(1, math.ceil((b - a) * math.sqrt(2 * M + 1) / (10 * math.pi)))
    current = integrate(panels)
    for _ in range(max_refinements):
        panels *= 2
        refined = integrate(panels)
        change = np.abs(refined - current).max()
        scale = max(1.0, np.abs(refined).max())
        current = refined
        if change <= rtol * scale:
            current = 0.5 * (current + current.T)
            return current
    raise ConvergenceError(
        f"overlap quadrature on [{a:.6g}, {b:.6g}] with n_max={M - 1} did not reach "
        f"rtol={rtol:g}: last change {change:.3e} with {panels} panels of order {order}")


def window_overlap_closed_form(interval, cutoff: CutoffLike) -> np.ndarray:
    """Off-diagonal overlaps from the Wronskian identity; the diagonal is NaN.

    For m != n, (E_m - E_n) int_a^b psi_m psi_n = [psi_m psi_n' - psi_n psi_m']_a^b / 2.
    Intended as an independent cross-check of :func:`window_overlap_matrix`.
    """
    a, b = map(float, interval)
    M = as_cutoff(cutoff).size

    def boundary(x):
        if math.isinf(x):
            return np.zeros((M, M))
        psi = eigenfunctions(M, np.array([x]))[:, 0]
        n = np.arange(M)
        dpsi = np.sqrt(n / 2.0) * np.concatenate(([0.0], psi[:M - 1])) - np.sqrt((n + 1) / 2.0) * psi[1:M + 1]
        psi = psi[:M]
        return np.outer(psi, dpsi) - np.outer(dpsi, psi)

    n = np.arange(M)
    diff = (n[:, None] - n[None, :]).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = (boundary(b) - boundary(a)) / (2.0 * diff)
    A[np.diag_indices(M)] = np.nan
    return A


def momentum_coefficients(cutoff: CutoffLike) -> np.ndarray:
    """Real antisymmetric matrix p~ with p = i p~ on the truncated space."""
    M = as_cutoff(cutoff).size
    off = np.sqrt(np.arange(1, M) / 2.0)
    return np.diag(-off, 1) + np.diag(off, -1)


def momentum_matrix(cutoff: CutoffLike) -> np.ndarray:
    """Momentum p = i (a^dag - a) / sqrt(2) as a complex Hermitian matrix."""
    return 1j * momentum_coefficients(cutoff)


def position_matrix(cutoff: CutoffLike) -> np.ndarray:
    """Position q = (a^dag + a) / sqrt(2)."""
    M = as_cutoff(cutoff).size
    off = np.sqrt(np.arange(1, M) / 2.0)
    return np.diag(off, 1) + np.diag(off, -1)


def level_energies(cutoff: CutoffLike) -> np.ndarray:
    """1D energies n + 1/2."""
    return np.arange(as_cutoff(cutoff).size) + 0.5


@dataclass(frozen=True)
class OperatorFactors:
    """1D matrices from which the window operators are assembled.

    ``p_z`` holds the real coefficients of i, i.e. the momentum matrix is
    ``1j * p_z``.
    """

    A_x: np.ndarray
    A_y: np.ndarray
    p_z: np.ndarray
    q_z: np.ndarray
    energies_1d: np.ndarray
    window: WindowRegion
    cutoff: BasisCutoff

    @property
    def n_max(self) -> int:
        return self.cutoff.n_max


def operator_factors(window: WindowRegion, cutoff: CutoffLike, rtol: float = 1e-10) -> OperatorFactors:
    cutoff = as_cutoff(cutoff)
    (ax, bx), (ay, by) = window.intervals()
    A_x = window_overlap_matrix((ax, bx), cutoff, rtol=rtol)
    if (ay, by) == (ax, bx):
        A_y = A_x
    elif (ay, by) == (-bx, -ax):
        # mirrored interval: A_mn -> (-1)^(m+n) A_mn
        sign = (-1.0) ** np.arange(cutoff.size)
        A_y = A_x * np.outer(sign, sign)
    else:
        A_y = window_overlap_matrix((ay, by), cutoff, rtol=rtol)
    for arr in (A_x, A_y):
        arr.setflags(write=False)
    p_z = momentum_coefficients(cutoff)
    q_z = position_matrix(cutoff)
    return OperatorFactors(A_x, A_y, p_z, q_z, level_energies(cutoff), window, cutoff)


def projector_defect(A: np.ndarray) -> float:
    """max |A^2 - A|; zero for an exact projector."""
    return float(np.abs(A @ A - A).max())


def eigenvalue_range(A: np.ndarray) -> Tuple[float, float]:
    ev = np.linalg.eigvalsh(A)
    return float(ev[0]), float(ev[-1])


def commutator_defect(A_x: np.ndarray, A_y: np.ndarray) -> float:
    """max |A_x^2 (x) A_y^2 - A_x (x) A_y| without forming the Kronecker products.

    This is the max-norm distance between [A A q, A A p] = i A^2 A^2 [q, p]
    and i A A 1, with the z-factor taken as the untruncated identity.
    For fixed (i, j) the entry is linear in the pair (A_y^2[k,l], A_y[k,l]),
    so its extreme values occur on the convex hull of those points.
    """
    Ax2, Ay2 = A_x @ A_x, A_y @ A_y
    pts = np.column_stack([Ay2.ravel(), A_y.ravel()])
    try:
        hull = pts[ConvexHull(pts).vertices]
    except (QhullError, ValueError):
        hull = np.unique(pts, axis=0)
    vals = np.abs(np.outer(Ax2.ravel(), hull[:, 0]) - np.outer(A_x.ravel(), hull[:, 1]))
    return float(vals.max())


def position_momentum_commutator(cutoff: CutoffLike) -> np.ndarray:
    """[q, p] on the truncated space: i times identity except the last diagonal entry."""
    q, p = position_matrix(cutoff), momentum_matrix(cutoff)
    return q @ p - p @ q
