"""Shared numerical kernels.

Bracketed scalar root finding, adaptive Gauss-Kronrod quadrature in one
dimension and over radially organized 3-D domains, minimal-norm linear
solves, and a deterministic dense Hermitian eigendecomposition.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


class ConvergenceError(RuntimeError):
    """An iterative kernel ran out of budget.

    Carries the best estimate reached (``best``) and the associated error
    bound (``error``) so callers can decide whether the partial result is
    usable.
    """

    def __init__(self, message: str, best: float | complex, error: float):
        super().__init__(message)
        self.best = best
        self.error = error


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RootProblem:
    """A scalar root-finding problem on a sign-changing bracket."""

    f: Callable[[float], float]
    lo: float
    hi: float
    tol: float = 1e-10
    max_iter: int = 200


def find_root(problem: RootProblem) -> float:
    """Locate a root of ``problem.f`` inside [lo, hi].

    Bisection with secant acceleration: a secant candidate is used whenever
    it falls strictly inside the current bracket, otherwise the midpoint.
    Robust on any continuous function with a sign change, and deterministic
    for fixed inputs.
    """
    f = problem.f
    a, b = float(problem.lo), float(problem.hi)
    if not (a < b):
        raise BracketError(f"invalid bracket [{a}, {b}]")
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise BracketError(f"f({a})={fa} and f({b})={fb} do not bracket a root")

    for _ in range(problem.max_iter):
        if (b - a) <= 2.0 * problem.tol:
            return 0.5 * (a + b)
        # Secant through the bracket endpoints, clipped to the interior.
        denom = fb - fa
        x = b - fb * (b - a) / denom if denom != 0.0 else 0.5 * (a + b)
        margin = 0.01 * (b - a)
        if not (a + margin < x < b - margin):
            x = 0.5 * (a + b)
        fx = f(x)
        if fx == 0.0:
            return x
        if fa * fx < 0:
            b, fb = x, fx
        else:
            a, fa = x, fx
    raise ConvergenceError(
        f"root not bracketed to tol={problem.tol} in {problem.max_iter} iterations",
        best=0.5 * (a + b),
        error=0.5 * (b - a),
    )


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod quadrature
# ---------------------------------------------------------------------------

# 15-point Kronrod extension of 7-point Gauss (nodes on [-1, 1]).
_XGK = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_WG = np.zeros(15)
_WG[1::2] = [0.129484966168870, 0.279705391489277, 0.381830050505119,
             0.417959183673469, 0.381830050505119, 0.279705391489277,
             0.129484966168870]


@dataclass
class IntegralResult:
    value: complex
    error: float
    evals: int

    def __float__(self) -> float:
        return float(np.real(self.value))


@dataclass(frozen=True)
class QuadratureSpec:
    """Specification for a radially organized 3-D integral.

    ``integrand`` is f(r, mu) where r is the radius and mu the cosine of
    the polar angle relative to the integrand's symmetry axis; azimuthal
    symmetry is always exploited (the 2 pi factor is applied internally),
    so integrands with a genuine azimuthal dependence must be reduced by
    the caller first.  ``domain`` is either a ball radius R or a radial
    shell (lo, hi).  Values may be complex.
    """

    integrand: Callable[[float, np.ndarray], np.ndarray]
    domain: float | tuple[float, float]
    rel_tol: float = 1e-8
    max_evals: int = 2_000_000
    radial_breakpoints: Sequence[float] = field(default_factory=tuple)
    mu_breakpoints: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_evals <= 0:
            raise ValueError("max_evals must be positive")


class _EvalBudget:
    __slots__ = ("used", "limit")

    def __init__(self, limit: int):
        self.used = 0
        self.limit = limit

    def spend(self, n: int) -> None:
        self.used += n
        if self.used > self.limit:
            raise _BudgetExceeded


class _BudgetExceeded(Exception):
    pass


def _gk15(f, a: float, b: float, budget: _EvalBudget):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid + half * _XGK
    budget.spend(x.size)
    fx = np.asarray(f(x))
    ik = half * np.sum(_WGK * fx)
    ig = half * np.sum(_WG * fx)
    resabs = half * float(np.sum(_WGK * np.abs(fx)))
    err = abs(ik - ig)
    # QUADPACK-style sharpening of the raw Gauss/Kronrod discrepancy.
    if resabs > 0 and err > 0:
        err = resabs * min(1.0, (200.0 * err / resabs) ** 1.5)
    return ik, err


def _initial_segments(lo: float, hi: float, breakpoints: Sequence[float]):
    pts = sorted({lo, hi, *(p for p in breakpoints if lo < p < hi)})
    return list(zip(pts[:-1], pts[1:]))


def _adaptive(f, lo: float, hi: float, rel_tol: float, budget: _EvalBudget,
              breakpoints: Sequence[float] = (), abs_floor: float = 0.0):
    if hi <= lo:
        return 0.0 + 0.0j, 0.0
    heap = []
    total_i = 0.0 + 0.0j
    total_e = 0.0
    for n, (a, b) in enumerate(_initial_segments(lo, hi, breakpoints)):
        i, e = _gk15(f, a, b, budget)
        total_i += i
        total_e += e
        heapq.heappush(heap, (-e, n, a, b, i))
    counter = len(heap)
    while total_e > max(rel_tol * abs(total_i), abs_floor) and heap:
        neg_e, _, a, b, i_old = heapq.heappop(heap)
        if -neg_e <= 1e-3 * abs_floor and abs_floor > 0:
            heapq.heappush(heap, (neg_e, counter, a, b, i_old))
            break
        e_old = -neg_e
        m = 0.5 * (a + b)
        i1, e1 = _gk15(f, a, m, budget)
        i2, e2 = _gk15(f, m, b, budget)
        total_i += i1 + i2 - i_old
        total_e += e1 + e2 - e_old
        heapq.heappush(heap, (-e1, counter, a, m, i1)); counter += 1
        heapq.heappush(heap, (-e2, counter, m, b, i2)); counter += 1
    return total_i, total_e


def integrate_1d(f, lo: float, hi: float, rel_tol: float = 1e-8,
                 max_evals: int = 500_000,
                 breakpoints: Sequence[float] = ()) -> IntegralResult:
    """Adaptive Gauss-Kronrod quadrature of a vectorized 1-D integrand."""
    budget = _EvalBudget(max_evals)
    try:
        value, error = _adaptive(f, float(lo), float(hi), rel_tol, budget, breakpoints)
    except _BudgetExceeded:
        raise ConvergenceError(
            f"1-D quadrature exceeded {max_evals} evaluations",
            best=0.0, error=math.inf) from None
    value = complex(value)
    if value.imag == 0.0:
        return IntegralResult(value.real, error, budget.used)
    return IntegralResult(value, error, budget.used)


def integrate_radial_3d(spec: QuadratureSpec) -> IntegralResult:
    """Integrate f(r, mu) over a ball or radial shell in spherical coordinates.

    I = 2 pi * int_r r^2 dr int_{-1}^{1} f(r, mu) dmu, with both layers
    adaptive.  Integrable 1/r singularities at the origin are tolerated
    because no node is placed exactly at r = 0.  On success the reported
    error bound is at most ``rel_tol`` times the estimate; running out of
    the evaluation budget raises :class:`ConvergenceError` carrying the
    partial estimate and its error bound.
    """
    if isinstance(spec.domain, tuple):
        r_lo, r_hi = spec.domain
    else:
        r_lo, r_hi = 0.0, float(spec.domain)
    if r_hi <= r_lo or r_lo < 0:
        raise ValueError(f"invalid radial domain ({r_lo}, {r_hi})")

    budget = _EvalBudget(spec.max_evals)
    inner_tol = 0.25 * spec.rel_tol
    mu_breaks = tuple(spec.mu_breakpoints)

    def shell(r_nodes: np.ndarray) -> np.ndarray:
        out = np.empty(r_nodes.shape, dtype=complex)
        for i, r in enumerate(r_nodes):
            inner, _ = _adaptive(lambda mu: spec.integrand(r, mu), -1.0, 1.0,
                                 inner_tol, budget, mu_breaks)
            out[i] = 2.0 * math.pi * r * r * inner
        return out

    try:
        value, error = _adaptive(shell, r_lo, r_hi, spec.rel_tol, budget,
                                 spec.radial_breakpoints)
    except _BudgetExceeded:
        raise ConvergenceError(
            f"radial quadrature exceeded {spec.max_evals} evaluations",
            best=0.0, error=math.inf) from None
    value = complex(value)
    if value.imag == 0.0:
        return IntegralResult(value.real, error, budget.used)
    return IntegralResult(value, error, budget.used)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def least_norm_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of a x = b.

    Returns the x of smallest 2-norm among the minimizers of ||a x - b||;
    this reduces to the exact solution when ``a`` is square nonsingular.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-D")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: A is {a.shape}, b has length {b.shape[0]}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return x


def hermitian_eigendecomposition(m: np.ndarray, herm_rel_tol: float = 1e-12,
                                 degeneracy_rel_tol: float = 1e-10):
    """Eigendecomposition of a dense Hermitian matrix, made deterministic.

    Eigenvalues come back ascending.  Each eigenvector is phase-fixed so its
    largest-magnitude component is real positive, and within a degenerate
    cluster the vectors are ordered by the index of that component.  Inputs
    that are not Hermitian within ``herm_rel_tol`` (relative to the largest
    entry) are rejected.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    scale = float(np.max(np.abs(m))) or 1.0
    if float(np.max(np.abs(m - m.conj().T))) > herm_rel_tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")

    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))

    anchors = np.empty(w.size, dtype=int)
    for k in range(w.size):
        idx = int(np.argmax(np.abs(v[:, k])))
        anchors[k] = idx
        pivot = v[idx, k]
        if np.abs(pivot) > 0:
            v[:, k] *= np.conj(pivot) / np.abs(pivot)

    # Reorder inside degenerate clusters by anchor index.
    w_scale = float(np.max(np.abs(w))) or 1.0
    start = 0
    for k in range(1, w.size + 1):
        if k == w.size or (w[k] - w[k - 1]) > degeneracy_rel_tol * w_scale:
            if k - start > 1:
                order = start + np.argsort(anchors[start:k], kind="stable")
                v[:, start:k] = v[:, order]
                w[start:k] = w[order]
            start = k
    return w, v
