"""Thermal expectation values of the feedback operators via Wick's theorem.

For an ideal-gas grand-canonical state the only non-zero contractions are
<a_i^dag a_j> = f_i delta_ij and <a_i a_j^dag> = (1 + f_i) delta_ij. With
single-particle kernels W (window number) and P (window momentum), and using
that P has a vanishing diagonal so <P_w> = 0 and every term containing
Tr[P f] drops out:

    <N_w>         = Tr[W f]
    <P_w^2>       = Tr[P (1+f) P f]
    <N_w P_w^2>   = <N_w><P_w^2> + Tr[W (1+f) P f P f] + Tr[W (1+f) P (1+f) P f]

The last two traces form the connected part; the enumeration backend in
:mod:`stochcool.oracle` checks all three formulas independently.

Traces over the cube mode set are evaluated either directly on dense
Kronecker matrices (small cutoffs) or through a separable expansion of the
occupation operators. The expansion keeps the leading fugacity terms
r^l exp(-l beta n) exactly, compresses the slowly converging geometric
remainder into a short non-negative exponential sum fitted on the discrete
levels, and treats the (0,0,0) mode with an exact rank-one term. Every term
factors over x, y and z, so a product of k traces needs K^k products of 1D
traces for an expansion of K terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from .basis import OperatorFactors
from .errors import ConvergenceError, DomainError, UsageError
from .thermo import ThermalEquilibrium

STRATEGIES = ("direct", "series")
DIRECT_MAX_NMAX = 12
SERIES_TOL = 1e-12
SERIES_MAX_TERMS = 512
_SERIES_START_TERMS = 32
_FIT_CANDIDATES = 120
_LOWRANK_CUTOFF = 1e-15


@dataclass(frozen=True)
class KroneckerKernel:
    """Single-particle kernel ``scale * (X_x (x) X_y (x) X_z)`` of a bilinear operator."""

    factors: Tuple[np.ndarray, np.ndarray, np.ndarray]
    scale: complex = 1.0

    @property
    def size(self) -> int:
        return self.factors[0].shape[0]

    def dense(self) -> np.ndarray:
        x, y, z = self.factors
        mat = np.kron(np.kron(x, y), z)
        return mat * self.scale if self.scale != 1.0 else mat


def window_kernels(factors: OperatorFactors, N_e: float = 1.0):
    """Kernels of N_w, P_w and Q_w for the given window factors."""
    I = np.eye(factors.cutoff.size)
    return {
        "N": KroneckerKernel((factors.A_x, factors.A_y, I)),
        "P": KroneckerKernel((factors.A_x, factors.A_y, factors.p_z), 1j),
        "Q": KroneckerKernel((factors.A_x, factors.A_y, factors.q_z), 1.0 / N_e),
    }


# ---------------------------------------------------------------------------
# separable expansion of the occupation operators


@dataclass(frozen=True)
class SeparableExpansion:
    """D(n) ~= sum_j weights[j] * prod_axes vectors[j, n_axis].

    ``rel_error`` is the largest relative deviation from the exact
    occupation factor over all retained levels, measured after fitting.
    """

    weights: np.ndarray
    vectors: np.ndarray
    rel_error: float
    fugacity_terms: int
    fitted_terms: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def level_values(self, n_levels: int) -> np.ndarray:
        """Evaluate the expansion on total levels 0..n_levels-1."""
        n = np.arange(n_levels)
        if self.vectors.shape[1] == 1:
            return np.where(n == 0, self.weights.sum(), 0.0)
        return (self.weights[:, None] * self.vectors[:, 1:2] ** n[None, :]).sum(axis=0)


def _fit_tail(levels, f, tail, rates_lo, rates_hi):
    rates = np.geomspace(rates_lo, rates_hi, _FIT_CANDIDATES)
    basis = np.exp(-np.outer(levels, rates))
    scale = 1.0 / f
    w, _ = nnls(basis * scale[:, None], tail * scale, maxiter=50 * _FIT_CANDIDATES)
    keep = w > 0
    return rates[keep], w[keep], basis[:, keep] @ w[keep]


def occupation_expansion(eq: ThermalEquilibrium, with_identity: bool = False,
                         tol: float = SERIES_TOL, max_terms: int = SERIES_MAX_TERMS) -> SeparableExpansion:
    """Separable expansion of f (or 1 + f) over the cube modes of ``eq``.

    The number of exact fugacity terms starts at 32 and doubles until the
    measured relative error is below ``tol``; exceeding ``max_terms`` raises
    :class:`ConvergenceError`.
    """
    M = eq.cutoff.size
    n_axis = np.arange(M)
    e0 = np.zeros(M)
    e0[0] = 1.0
    ident = ([1.0], [np.ones(M)]) if with_identity else ([], [])

    if eq.T == 0 or M == 1:
        w = ident[0] + [eq.ground_occupation]
        v = ident[1] + [e0]
        return SeparableExpansion(np.array(w), np.array(v), 0.0, 0, 0)

    beta, r = eq.beta, eq.ground_ratio
    f = np.asarray(eq.occupations)
    levels = np.arange(1, len(f))
    f_exc = f[1:]
    ok = f_exc > 1e-290
    levels, f_exc = levels[ok], f_exc[ok]
    x = r * np.exp(-beta * levels)
    L = _SERIES_START_TERMS
    while True:
        tail = f_exc * x**L  # exact remainder beyond L fugacity terms
        rates_fit = np.empty(0)
        w_fit = np.empty(0)
        approx = np.zeros_like(tail)
        if (tail / f_exc).max() > 0.01 * tol:
            lo = (L + 1) * beta * 0.9
            rates_fit, w_fit, approx = _fit_tail(levels, f_exc, tail, lo, max(60.0, 4 * lo))
        err = float((np.abs(approx - tail) / f_exc).max()) if len(levels) else 0.0
        if err <= tol:
            break
        if L >= max_terms:
            raise ConvergenceError(
                f"occupation expansion at T={eq.T:.6g} did not reach rel. error {tol:g} "
                f"with {L} fugacity terms (error {err:.3e})")
        L = min(2 * L, max_terms)

    l = np.arange(1, L + 1)
    rates = np.concatenate([beta * l, rates_fit])
    weights = np.concatenate([r**l, w_fit])
    # exact ground mode: f0 - (sum_{l<=L} r^l + sum w_fit) = f0 r^L - sum w_fit
    ground = f[0] * r**L - w_fit.sum()
    vectors = np.exp(-np.outer(rates, n_axis))
    weights = np.concatenate([ident[0], weights, [ground]])
    vectors = np.vstack(ident[1] + [vectors, e0[None, :]])
    return SeparableExpansion(weights, vectors, err, L, len(w_fit))


# ---------------------------------------------------------------------------
# 1D trace tables


def _lowrank(X):
    lam, U = np.linalg.eigh(X)
    keep = np.abs(lam) > _LOWRANK_CUTOFF * max(np.abs(lam).max(), 1e-300)
    return lam[keep], U[:, keep]


def _is_sparse(X, limit=0.05):
    return np.count_nonzero(X) <= limit * X.size


def _axis_table(mats: Sequence[np.ndarray], V: Sequence[np.ndarray]) -> np.ndarray:
    """T[j1..jk] = tr(X1 diag(V1[j1]) X2 diag(V2[j2]) ... Xk diag(Vk[jk]))."""
    k = len(mats)
    if k == 1:
        return V[0] @ np.diag(mats[0])
    if k == 2:
        X1, X2 = mats
        return V[0] @ (X1.T * X2) @ V[1].T
    if k != 3:
        raise UsageError("trace products of more than three bilinears are not supported")
    X1, X2, X3 = mats
    V1, V2, V3 = V
    symmetric = all(X is X1 or np.array_equal(X, X1) for X in mats) and np.allclose(X1, X1.T, rtol=0, atol=1e-14)
    if symmetric:
        lam, U = _lowrank(X1)
        if len(lam) <= X1.shape[0] // 3:
            # tr(L G1 L G2 L G3) with G_j = U^T diag(v_j) U
            def proj(Vs):
                return np.einsum("ar,ja,as->jrs", U, Vs, U, optimize=True)
            G1, G2, G3 = proj(V1), proj(V2), proj(V3)
            H1 = lam[None, :, None] * G1
            H2 = lam[None, :, None] * G2
            H3 = lam[None, :, None] * G3
            HH = np.einsum("irs,jst->ijrt", H1, H2, optimize=True)
            return np.einsum("ijrt,ktr->ijk", HH, H3, optimize=True)
    if _is_sparse(X1) and _is_sparse(X2):
        a, b = np.nonzero(X1)
        v1 = X1[a, b]
        rows = [np.nonzero(X2[bi])[0] for bi in range(X2.shape[0])]
        counts = np.array([len(rows[bi]) for bi in b])
        a_e, b_e, v_e = np.repeat(a, counts), np.repeat(b, counts), np.repeat(v1, counts)
        c_e = np.concatenate([rows[bi] for bi in b]) if len(b) else np.empty(0, int)
        val = v_e * X2[b_e, c_e] * X3[c_e, a_e]
        nz = val != 0
        a_e, b_e, c_e, val = a_e[nz], b_e[nz], c_e[nz], val[nz]
        Y = V1[:, b_e] * val
        Z = Y[:, None, :] * V2[None, :, c_e]
        return Z @ V3[:, a_e].T
    out = np.empty((len(V1), len(V2), len(V3)))
    for j, v in enumerate(V1):
        R = ((X1 * v[None, :]) @ X2) * X3.T
        out[j] = (V3 @ R @ V2.T).T
    return out


@dataclass(frozen=True)
class TraceValue:
    value: float
    error_estimate: float
    strategy: str


def _check_kernels(kernels, eq):
    M = eq.cutoff.size
    for K in kernels:
        if any(X.shape != (M, M) for X in K.factors):
            raise UsageError(f"kernel factor shapes do not match the cutoff n_max={eq.cutoff.n_max}")


def _tag_identity(tag: str) -> bool:
    if tag == "f":
        return False
    if tag == "1+f":
        return True
    raise UsageError(f"occupation tag must be 'f' or '1+f', got {tag!r}")


def evaluate_trace_product(factors: Sequence[Tuple[KroneckerKernel, str]], eq: ThermalEquilibrium,
                           strategy: str = "series", *, direct_max_nmax: int = DIRECT_MAX_NMAX,
                           tol: float = SERIES_TOL, expansions: Optional[dict] = None) -> TraceValue:
    """Tr[X1 D1 X2 D2 ...] with each D the diagonal f or 1 + f operator.

    ``factors`` is an ordered list of (kernel, tag) pairs, tag in {"f", "1+f"}.
    The result is real for the Hermitian combinations used here; the
    imaginary part is discarded after checking it is at round-off level.
    """
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    kernels = [k for k, _ in factors]
    tags = [_tag_identity(t) for _, t in factors]
    _check_kernels(kernels, eq)
    scale = complex(np.prod([k.scale for k in kernels]))

    if strategy == "direct":
        if eq.cutoff.n_max > direct_max_nmax:
            raise UsageError(f"direct strategy limited to n_max <= {direct_max_nmax}, got {eq.cutoff.n_max}")
        f = eq.mode_occupations().ravel()
        mats = [np.kron(np.kron(*k.factors[:2]), k.factors[2]) for k in kernels]
        diags = [f + 1.0 if t else f for t in tags]
        value = _dense_chain_trace(mats, diags)
        absval = _dense_chain_trace([np.abs(m) for m in mats], diags)
        total = scale * value
        return TraceValue(_real(total, absval * abs(scale)), float(64 * np.finfo(float).eps * absval * abs(scale)),
                          "direct")

    if expansions is None:
        expansions = {}
    exps = []
    for t in tags:
        if t not in expansions:
            expansions[t] = occupation_expansion(eq, with_identity=t, tol=tol)
        exps.append(expansions[t])
    V = [e.vectors for e in exps]
    terms = None
    for axis in range(3):
        table = _axis_table([k.factors[axis] for k in kernels], V)
        terms = table if terms is None else terms * table
    for i, e in enumerate(exps):
        shape = [1] * len(exps)
        shape[i] = -1
        terms = terms * e.weights.reshape(shape)
    value = terms.sum()
    abs_sum = np.abs(terms).sum()
    rel = sum(e.rel_error for e in exps)
    err = (rel + terms.size * np.finfo(float).eps) * abs_sum * abs(scale)
    return TraceValue(_real(scale * value, abs_sum * abs(scale)), float(err), "series")


def _real(value: complex, magnitude: float) -> float:
    value = complex(value)
    if abs(value.imag) > 1e-10 * max(magnitude, 1e-300):
        raise ConvergenceError(f"trace of a Hermitian combination has imaginary part {value.imag:.3e}")
    return value.real


def _dense_chain_trace(mats, diags):
    Y = mats[0] * diags[0][None, :]
    for X, d in zip(mats[1:-1], diags[1:-1]):
        Y = Y @ (X * d[None, :])
    if len(mats) == 1:
        return np.trace(Y)
    last = mats[-1] * diags[-1][None, :]
    return (Y * last.T).sum()


# ---------------------------------------------------------------------------
# dense Wick formulas on an arbitrary mode set


def wick_moments(W: np.ndarray, P: np.ndarray, f: np.ndarray, flip_sextic_sign: bool = False):
    """(<N>, <P^2>, connected part of <N P^2>) for kernels W, P and occupations f.

    Kernels are dense single-particle matrices on any finite mode set;
    ``P`` must have a vanishing diagonal. ``flip_sextic_sign`` injects a
    deliberate sign error into the second connected trace and exists only
    to exercise the validation suite.
    """
    f = np.asarray(f, dtype=float)
    g = 1.0 + f
    if np.abs(np.diag(P)).max(initial=0.0) != 0.0:
        raise UsageError("momentum kernel must have a vanishing diagonal")
    mean_n = float(np.real(np.diag(W) @ f))
    p2 = _dense_chain_trace([P, P], [g, f])
    t1 = _dense_chain_trace([W, P, P], [g, f, f])
    t2 = _dense_chain_trace([W, P, P], [g, g, f])
    sign = -1.0 if flip_sextic_sign else 1.0
    return mean_n, float(np.real(p2)), float(np.real(t1 + sign * t2))


# ---------------------------------------------------------------------------
# correlators of the feedback operators


@dataclass(frozen=True)
class CorrelatorSet:
    """The three expectation values entering the feedback energy change.

    ``corr_dNw_Pw2`` is <(N_w - N_e) P_w^2> for the stored estimate ``N_e``;
    ``connected`` is <N_w P_w^2> - <N_w><P_w^2>, independent of ``N_e``.
    ``errors`` holds absolute error estimates for the three values.
    """

    mean_Nw: float
    mean_Pw2: float
    corr_dNw_Pw2: float
    N_e: float
    connected: float
    strategy_used: str
    errors: dict = field(default_factory=dict)

    @property
    def error_estimate(self) -> float:
        """Largest relative error estimate among the three values."""
        rel = [0.0]
        for key in ("mean_Nw", "mean_Pw2", "corr_dNw_Pw2"):
            val = abs(getattr(self, key))
            if key in self.errors and val > 0:
                rel.append(self.errors[key] / val)
        return max(rel)

    def with_estimate(self, N_e: float) -> "CorrelatorSet":
        """Re-express the number-momentum correlator for another estimate N_e."""
        corr = self.connected + (self.mean_Nw - N_e) * self.mean_Pw2
        errors = dict(self.errors)
        if "connected" in errors:
            errors["corr_dNw_Pw2"] = errors["connected"] + abs(self.mean_Nw - N_e) * errors.get("mean_Pw2", 0.0)
        return replace(self, N_e=float(N_e), corr_dNw_Pw2=corr, errors=errors)


def _check_factors(eq: ThermalEquilibrium, factors: OperatorFactors):
    if factors.cutoff != eq.cutoff:
        raise UsageError(f"operator factors built for n_max={factors.n_max} "
                         f"but equilibrium has n_max={eq.cutoff.n_max}")


def mean_window_number(eq: ThermalEquilibrium, factors: OperatorFactors) -> float:
    """<N_w> = sum over modes of A_x[nx,nx] A_y[ny,ny] f(nx + ny + nz)."""
    _check_factors(eq, factors)
    per_level = np.convolve(np.convolve(np.diag(factors.A_x), np.diag(factors.A_y)),
                            np.ones(eq.cutoff.size))
    return float(per_level @ eq.occupations)


def mean_window_momentum(eq: ThermalEquilibrium, factors: OperatorFactors) -> float:
    """<P_w> = Tr[P f]; identically zero because p has no diagonal."""
    _check_factors(eq, factors)
    if np.any(np.diag(factors.p_z) != 0):
        raise UsageError("momentum matrix must have a vanishing diagonal")
    return 0.0


def momentum_second_moment(eq: ThermalEquilibrium, factors: OperatorFactors,
                           strategy: str = "series", **kwargs) -> TraceValue:
    """<P_w^2> = Tr[P (1+f) P f] for a thermal state."""
    _check_factors(eq, factors)
    mean_window_momentum(eq, factors)
    P = window_kernels(factors)["P"]
    return evaluate_trace_product([(P, "1+f"), (P, "f")], eq, strategy, **kwargs)


def connected_number_momentum(eq: ThermalEquilibrium, factors: OperatorFactors,
                              strategy: str = "series", **kwargs) -> TraceValue:
    """Tr[W (1+f) P f P f] + Tr[W (1+f) P (1+f) P f]."""
    _check_factors(eq, factors)
    k = window_kernels(factors)
    W, P = k["N"], k["P"]
    t1 = evaluate_trace_product([(W, "1+f"), (P, "f"), (P, "f")], eq, strategy, **kwargs)
    t2 = evaluate_trace_product([(W, "1+f"), (P, "1+f"), (P, "f")], eq, strategy, **kwargs)
    return TraceValue(t1.value + t2.value, t1.error_estimate + t2.error_estimate, t1.strategy)


def number_momentum_correlator(eq: ThermalEquilibrium, factors: OperatorFactors, N_e: float,
                               strategy: str = "series", **kwargs) -> float:
    """<(N_w - N_e) P_w^2> = <N_w P_w^2> - N_e <P_w^2>."""
    return compute_correlators(eq, factors, N_e=N_e, strategy=strategy, **kwargs).corr_dNw_Pw2


def compute_correlators(eq: ThermalEquilibrium, factors: OperatorFactors, N_e: Optional[float] = None,
                        strategy: str = "series", **kwargs) -> CorrelatorSet:
    """All three feedback correlators; ``N_e`` defaults to <N_w>."""
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    _check_factors(eq, factors)
    if N_e is not None and not N_e >= 0:
        raise DomainError(f"N_e must be non-negative, got {N_e!r}")
    n = mean_window_number(eq, factors)
    if n == 0.0 or factors.window.is_empty:
        return CorrelatorSet(0.0, 0.0, 0.0, float(N_e or 0.0), 0.0, strategy,
                             {"mean_Nw": 0.0, "mean_Pw2": 0.0, "connected": 0.0, "corr_dNw_Pw2": 0.0})
    kwargs.setdefault("expansions", {})
    p2 = momentum_second_moment(eq, factors, strategy, **kwargs)
    conn = connected_number_momentum(eq, factors, strategy, **kwargs)
    errors = {"mean_Nw": 1e-15 * n, "mean_Pw2": p2.error_estimate, "connected": conn.error_estimate}
    base = CorrelatorSet(n, p2.value, 0.0, n, conn.value, strategy, errors)
    return base.with_estimate(n if N_e is None else N_e)
