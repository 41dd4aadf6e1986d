"""Fixed-point solvers for phi = A phi + b and the matching adjoint solves.

Three paths, picked automatically:

  * acyclic  - permute (I - A) by the topological order into unit lower
               triangular form and back-substitute; one linear pass.
  * direct   - dense LU via numpy for moderate dimensions.
  * picard   - Anderson-accelerated Picard iteration for everything else.

Each path has an adjoint twin solving (I - A)^T y = rhs with the same
complexity, so a gradient costs about two flow solves regardless of size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .core import AffineFlowSystem, SolveReport, spectral_safety_check
from .errors import DimensionMismatch, NoConvergence

__all__ = [
    "SolverConfig",
    "solve_flows",
    "solve_linear",
    "solve_adjoint",
]

_DENSE_LIMIT = 512


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the fixed-point solve.

    method: 'auto', 'acyclic', 'direct', or 'picard'.
    fp_tol: residual tolerance ||phi - (A phi + b)||_inf for picard.
    max_iter: picard iteration budget.
    anderson_depth: history window for Anderson mixing (0 disables).
    safety_check: run the spectral certificate before solving.
    kappa: contraction margin used by the certificate.
    """

    method: str = "auto"
    fp_tol: float = 1e-10
    max_iter: int = 10000
    anderson_depth: int = 5
    safety_check: bool = True
    kappa: float = 1.0 - 1e-9

    def __post_init__(self):
        if self.method not in ("auto", "acyclic", "direct", "picard"):
            raise ValueError(f"unknown solver method {self.method!r}")


def _pick_method(system: AffineFlowSystem, config: SolverConfig) -> str:
    if config.method != "auto":
        return config.method
    if system.acyclic_order is not None:
        return "acyclic"
    if system.dim <= _DENSE_LIMIT:
        return "direct"
    return "picard"


# ---------------------------------------------------------------------------
# Triangular path
# ---------------------------------------------------------------------------

def _acyclic_solve(A: sp.csr_matrix, b: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Solve (I - A) phi = b using the topological order.

    Permuting rows and columns by the order makes I - A unit lower
    triangular (every remaining A entry sits strictly below the diagonal),
    so a single sparse back-substitution finishes the job.
    """
    d = A.shape[0]
    M = sp.eye(d, format="csr") - A
    P = M[order][:, order].tocsr()
    x = spsolve_triangular(P, b[order], lower=True, unit_diagonal=True)
    out = np.empty(d)
    out[order] = x
    return out


def _acyclic_adjoint(A: sp.csr_matrix, rhs: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Solve (I - A)^T y = rhs; the same permutation makes the transpose
    unit upper triangular."""
    d = A.shape[0]
    M = sp.eye(d, format="csr") - A
    Pt = M[order][:, order].transpose().tocsr()
    x = spsolve_triangular(Pt, rhs[order], lower=False, unit_diagonal=True)
    out = np.empty(d)
    out[order] = x
    return out


# ---------------------------------------------------------------------------
# Dense direct path
# ---------------------------------------------------------------------------

def _direct_solve(A: sp.csr_matrix, b: np.ndarray, transpose: bool = False) -> np.ndarray:
    M = np.eye(A.shape[0]) - A.toarray()
    if transpose:
        M = M.T
    return np.linalg.solve(M, b)


# ---------------------------------------------------------------------------
# Anderson-accelerated Picard path
# ---------------------------------------------------------------------------

def _picard(
    matvec,
    b: np.ndarray,
    tol: float,
    max_iter: int,
    depth: int,
) -> tuple[np.ndarray, int, float]:
    """Iterate x <- matvec(x) + b with Anderson mixing over the residual
    history. Returns (x, iterations, residual_norm) or raises NoConvergence
    with the best iterate attached.
    """
    d = b.size
    x = b.copy()
    G: list[np.ndarray] = []   # map outputs g_k = matvec(x_k) + b
    X: list[np.ndarray] = []   # iterates x_k
    best = x
    best_res = np.inf
    for k in range(1, max_iter + 1):
        g = matvec(x) + b
        res = float(np.max(np.abs(g - x))) if d else 0.0
        if res < best_res:
            best, best_res = g, res
        if res <= tol:
            return g, k, res
        if depth > 0:
            G.append(g)
            X.append(x)
            if len(G) > depth + 1:
                G.pop(0)
                X.pop(0)
            m = len(G)
            if m >= 2:
                # Least-squares mixing weights over recent residuals,
                # ridge-regularized, constrained to sum to one.
                F = np.stack([gi - xi for gi, xi in zip(G, X)], axis=1)
                FtF = F.T @ F
                FtF += 1e-10 * np.eye(m) * max(1.0, np.trace(FtF) / m)
                ones = np.ones(m)
                try:
                    w = np.linalg.solve(FtF, ones)
                    w /= w.sum()
                    x = np.stack(G, axis=1) @ w
                    continue
                except np.linalg.LinAlgError:
                    pass
        x = g
    raise NoConvergence(max_iter, best_res, best=best)


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def solve_linear(
    system: AffineFlowSystem,
    theta: np.ndarray,
    rhs: np.ndarray,
    config: SolverConfig = SolverConfig(),
    transpose: bool = False,
) -> SolveReport:
    """Solve (I - A(theta)) x = rhs, or the transpose system when asked.

    This is the shared engine behind solve_flows (rhs = b(theta)) and
    solve_adjoint (transpose, rhs = seed vector).
    """
    theta = system.check_theta(theta)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (system.dim,):
        raise DimensionMismatch("right-hand side", system.dim, rhs.size)
    if config.safety_check:
        spectral_safety_check(system, theta, kappa=config.kappa)
    A = system.eval_A(theta)
    method = _pick_method(system, config)
    if method == "acyclic":
        if system.acyclic_order is None:
            raise ValueError("acyclic solve requested but system has no acyclic order")
        if transpose:
            x = _acyclic_adjoint(A, rhs, system.acyclic_order)
        else:
            x = _acyclic_solve(A, rhs, system.acyclic_order)
        return SolveReport(x, 1, 0.0, "acyclic")
    if method == "direct":
        x = _direct_solve(A, rhs, transpose=transpose)
        op = A.T if transpose else A
        res = float(np.max(np.abs(op @ x + rhs - x)))
        return SolveReport(x, 1, res, "direct")
    op = (A.T.tocsr() if transpose else A)
    x, iters, res = _picard(
        lambda v: op @ v, rhs, config.fp_tol, config.max_iter, config.anderson_depth
    )
    return SolveReport(x, iters, res, "picard")


def solve_flows(
    system: AffineFlowSystem,
    theta: np.ndarray,
    config: SolverConfig = SolverConfig(),
) -> SolveReport:
    """Solve the flow fixed point phi = A(theta) phi + b(theta)."""
    theta = system.check_theta(theta)
    b = system.eval_b(theta)
    return solve_linear(system, theta, b, config=config)


def solve_adjoint(
    system: AffineFlowSystem,
    theta: np.ndarray,
    rhs: np.ndarray,
    config: SolverConfig = SolverConfig(),
) -> SolveReport:
    """Solve the adjoint system (I - A(theta))^T y = rhs.

    The adjoint reuses whichever path the forward solve would take; its
    safety certificate is shared (the transpose has the same spectrum), so
    the check is skipped here when the caller already ran it.
    """
    return solve_linear(system, theta, rhs, config=config, transpose=True)
