"""Core data structures: feasible sets, the affine flow system, objectives,
and the spectral safety certificate.

The central object is AffineFlowSystem, describing a parametric fixed-point
equation

    phi = A(theta) phi + b(theta)

over nonnegative flow vectors phi, together with optional analytic
derivative callbacks. An Objective scores an operating point (theta, phi)
as a weighted sum of per-queue rewards and declares enough derivative
structure for adjoint-based gradients.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, SafetyCheckFailed

__all__ = [
    "Box",
    "BudgetSimplex",
    "FeasibleSet",
    "ParamJacobian",
    "AffineFlowSystem",
    "Objective",
    "SolveReport",
    "CheckResult",
    "GradientReport",
    "eval_G",
    "toposort",
    "spectral_safety_check",
]


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box {x : lower <= x <= upper}, projection by clipping."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("box bounds", lo.size, hi.size)
        if np.any(lo > hi):
            raise ValueError("box has lower > upper in some coordinate")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch("point to project", self.dim, x.size)
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def interior_distance(self, x: np.ndarray) -> np.ndarray:
        """Per-coordinate distance from x to the nearest bound."""
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.minimum(x - lo, hi - x)


@dataclass(frozen=True)
class BudgetSimplex:
    """Nonnegative orthant capped by a budget: {x >= 0, sum(x) <= budget}.

    Projection: clip to the orthant; if the budget holds, done. Otherwise
    project onto the face sum(x) = budget by the sorted-threshold rule.
    """

    dim: int
    budget: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("simplex dimension must be positive")
        if self.budget <= 0:
            raise ValueError("budget must be positive")

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch("point to project", self.dim, x.size)
        y = np.maximum(x, 0.0)
        if y.sum() <= self.budget:
            return y
        # Euclidean projection onto {x >= 0, sum(x) = budget}.
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - self.budget
        ks = np.arange(1, self.dim + 1)
        rho = np.nonzero(u - css / ks > 0)[0][-1]
        tau = css[rho] / (rho + 1.0)
        return np.maximum(x - tau, 0.0)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        return bool(np.all(x >= -tol) and x.sum() <= self.budget + tol)

    def interior_distance(self, x: np.ndarray) -> np.ndarray:
        """Per-coordinate distance to the boundary along each axis
        (to zero below, to the budget face above)."""
        x = np.asarray(x, dtype=float)
        slack = self.budget - x.sum()
        return np.minimum(x - 0.0, np.full(self.dim, slack))


FeasibleSet = Box | BudgetSimplex


# ---------------------------------------------------------------------------
# Parametric derivative of A in packed triplet form
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParamJacobian:
    """Sparse representation of dA/dtheta as parallel arrays.

    Entry t states: d A[rows[t], cols[t]] / d theta[param_idx[t]] = coeffs[t].
    The adjoint contraction y^T (dA/dtheta_j) phi for all j at once is a
    single weighted bincount over these triplets.
    """

    param_idx: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray
    param_dim: int

    def vjp(self, y: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Return the vector with components y^T (dA/dtheta_j) phi."""
        if self.param_idx.size == 0:
            return np.zeros(self.param_dim)
        w = self.coeffs * y[self.rows] * phi[self.cols]
        return np.bincount(self.param_idx, weights=w, minlength=self.param_dim)


# ---------------------------------------------------------------------------
# The affine flow system
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineFlowSystem:
    """Parametric affine fixed-point system phi = A(theta) phi + b(theta).

    eval_A returns A(theta) as a CSR matrix with a theta-independent
    sparsity pattern (given by `rows`, `cols`). eval_b returns the vector
    b(theta). The analytic derivative callbacks are optional; engines that
    need them raise MissingAnalyticJacobians when absent.

    eval_dA(theta) -> ParamJacobian for dA/dtheta at theta.
    eval_db(theta) -> dense (dim, param_dim) array db/dtheta; None means
    b does not depend on theta.

    acyclic_order, when present, is a topological order of the queue graph
    (node i may feed node j only if i precedes j in the order); it unlocks
    the linear-time triangular solve path.
    """

    dim: int
    param_dim: int
    eval_A: Callable[[np.ndarray], sp.csr_matrix]
    eval_b: Callable[[np.ndarray], np.ndarray]
    rows: np.ndarray
    cols: np.ndarray
    eval_dA: Optional[Callable[[np.ndarray], ParamJacobian]] = None
    eval_db: Optional[Callable[[np.ndarray], np.ndarray]] = None
    acyclic_order: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("system dimension must be positive")
        if self.param_dim < 0:
            raise ValueError("parameter dimension must be nonnegative")
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise DimensionMismatch("sparsity pattern", rows.size, cols.size)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        if self.acyclic_order is not None:
            order = np.asarray(self.acyclic_order, dtype=np.int64)
            if order.shape != (self.dim,):
                raise DimensionMismatch("acyclic order", self.dim, order.size)
            object.__setattr__(self, "acyclic_order", order)

    def has_analytic_jacobians(self) -> bool:
        return self.eval_dA is not None

    def check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise DimensionMismatch("theta", self.param_dim, theta.size)
        return theta


def eval_G(system: AffineFlowSystem, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Evaluate the fixed-point map G(theta, phi) = A(theta) phi + b(theta)."""
    theta = system.check_theta(theta)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (system.dim,):
        raise DimensionMismatch("phi", system.dim, phi.size)
    return system.eval_A(theta) @ phi + system.eval_b(theta)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Objective:
    """Separable objective J(theta, phi) = sum_i weights[i] * r_i(theta, phi_i).

    rewards(theta, phi)        -> per-queue reward vector (dim,)
    rewards_dphi(theta, phi)   -> diagonal of dr/dphi, shape (dim,)
    rewards_dtheta(theta, phi) -> dense (dim, param_dim) dr/dtheta, or None
                                  when rewards ignore theta directly
    stability_margin(theta, phi) -> per-queue margin; nonpositive entries
                                  mean the reward is undefined there
    """

    weights: np.ndarray
    rewards: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rewards_dphi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rewards_dtheta: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    stability_margin: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)

    @property
    def explicit_theta_dependence(self) -> bool:
        return self.rewards_dtheta is not None

    def value(self, theta: np.ndarray, phi: np.ndarray) -> float:
        return float(self.weights @ self.rewards(theta, phi))

    def margins(self, theta: np.ndarray, phi: np.ndarray) -> Optional[np.ndarray]:
        if self.stability_margin is None:
            return None
        return self.stability_margin(theta, phi)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SolveReport:
    """Result of one flow solve: the fixed point, the work it took, and the
    path that produced it ('acyclic', 'direct', or 'picard')."""

    flows: np.ndarray
    iterations: int
    residual_norm: float
    method: str


@dataclass(frozen=True)
class CheckResult:
    """Outcome of the spectral safety check. `rule` names the certificate
    that fired: 'substochastic', 'acyclic', or 'power_iteration'."""

    passed: bool
    rule: str
    detail: float


@dataclass(frozen=True, eq=False)
class GradientReport:
    """A gradient evaluation with its audit trail: how many fixed-point
    solves and how many fixed-point-map evaluations the engine spent."""

    gradient: np.ndarray
    objective_value: float
    flows: np.ndarray
    adjoint: Optional[np.ndarray]
    fp_solves: int
    g_evals: int
    engine: str


# ---------------------------------------------------------------------------
# Topological sorting
# ---------------------------------------------------------------------------

def toposort(dim: int, rows: Sequence[int], cols: Sequence[int]) -> Optional[np.ndarray]:
    """Topological order of the graph with edges cols[t] -> rows[t]
    (queue j feeds queue i when A[i, j] can be nonzero).

    Returns an index array, lowest index first among ties, or None if the
    graph has a cycle. Self-loops count as cycles.
    """
    succ: list[list[int]] = [[] for _ in range(dim)]
    indeg = np.zeros(dim, dtype=np.int64)
    for r, c in zip(rows, cols):
        succ[int(c)].append(int(r))
        indeg[int(r)] += 1
    ready = [i for i in range(dim) if indeg[i] == 0]
    heapq.heapify(ready)
    order = np.empty(dim, dtype=np.int64)
    n = 0
    while ready:
        u = heapq.heappop(ready)
        order[n] = u
        n += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if n < dim:
        return None
    return order


# ---------------------------------------------------------------------------
# Spectral safety
# ---------------------------------------------------------------------------

def _two_step_spectral_estimate(
    A: sp.csr_matrix, budget: int = 200, tol: float = 1e-8
) -> float:
    """Estimate the spectral radius of A with power iteration on pairs of
    matvecs: lam_hat = sqrt(||A^2 x|| / ||x||). The squared step makes the
    estimate insensitive to eigenvalue sign flips (e.g. spectra of the form
    {+lam, -lam}), which stall the plain one-step ratio.
    """
    d = A.shape[0]
    rng = np.random.default_rng(0)
    x = rng.standard_normal(d)
    x /= np.linalg.norm(x)
    prev = np.inf
    est = 0.0
    for _ in range(budget // 2):
        y = A @ (A @ x)
        ny = np.linalg.norm(y)
        est = np.sqrt(ny)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(est - prev) <= tol * max(1.0, est):
            return est
        prev = est
    return est


def spectral_safety_check(
    system: AffineFlowSystem,
    theta: np.ndarray,
    kappa: float = 1.0 - 1e-9,
    raise_on_fail: bool = True,
) -> CheckResult:
    """Certify rho(A(theta)) < 1 before committing to a fixed-point solve.

    Cheapest certificate first:
      1. substochastic: every row sum <= kappa, or every column sum <= kappa
         (either matrix norm bounds the spectral radius);
      2. acyclic: the system carries a topological order, so A is
         permutation-similar to strictly triangular and rho(A) = 0;
      3. power_iteration: two-step power iteration estimate, accepted when
         the estimate stays below kappa.

    Raises SafetyCheckFailed when no certificate fires (unless
    raise_on_fail is False, in which case the failing CheckResult returns).
    """
    theta = system.check_theta(theta)
    A = system.eval_A(theta)
    absA = abs(A)
    row_sums = np.asarray(absA.sum(axis=1)).ravel()
    col_sums = np.asarray(absA.sum(axis=0)).ravel()
    row_max = float(row_sums.max()) if row_sums.size else 0.0
    col_max = float(col_sums.max()) if col_sums.size else 0.0
    bound = min(row_max, col_max)
    if bound <= kappa:
        return CheckResult(True, "substochastic", bound)
    if system.acyclic_order is not None:
        return CheckResult(True, "acyclic", 0.0)
    est = _two_step_spectral_estimate(A)
    if est <= kappa:
        return CheckResult(True, "power_iteration", est)
    if raise_on_fail:
        raise SafetyCheckFailed(est)
    return CheckResult(False, "power_iteration", est)
