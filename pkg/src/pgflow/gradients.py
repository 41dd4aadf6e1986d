"""Gradient engines for objectives constrained by an affine flow fixed point.

All engines return the same GradientReport; they differ in what derivative
information they consume and what they spend:

  analytic          1 flow solve + 1 adjoint solve, needs declared
                    derivative callbacks; exact to solver tolerance.
  numeric_jacobian  1 flow solve + 1 adjoint solve; rebuilds the local
                    Jacobians from central differences of the fixed-point
                    map, then runs the same adjoint pipeline. Baseline for
                    checking hand-written derivatives.
  finite_difference exactly 2p + 1 flow solves; central differences on the
                    objective itself. Slowest, fewest assumptions.

The objective value helper lives here too, since every engine and the line
search all need "solve flows, check stability, score".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import (
    AffineFlowSystem,
    FeasibleSet,
    GradientReport,
    Objective,
    eval_G,
)
from .errors import (
    BoundaryProbe,
    MissingAnalyticJacobians,
    UnstableOperatingPoint,
)
from .solvers import SolverConfig, solve_adjoint, solve_flows

__all__ = [
    "GradientConfig",
    "ENGINES",
    "objective_value",
    "analytic_gradient",
    "numeric_jacobian_gradient",
    "finite_difference_gradient",
    "compute_gradient",
]

ENGINES = ("analytic", "numeric_jacobian", "finite_difference")


@dataclass(frozen=True)
class GradientConfig:
    """Engine selection plus shared numerics.

    eps is the central-difference half-width for the numeric engines.
    feasible (optional) lets the finite-difference engine shrink probes
    that would otherwise step outside the feasible set.
    """

    engine: str = "analytic"
    eps: float = 1e-8
    solver: SolverConfig = field(default_factory=SolverConfig)
    feasible: Optional[FeasibleSet] = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown gradient engine {self.engine!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def _check_stability(objective: Objective, theta: np.ndarray, phi: np.ndarray) -> None:
    margins = objective.margins(theta, phi)
    if margins is None:
        return
    bad = np.nonzero(margins <= 0.0)[0]
    if bad.size:
        raise UnstableOperatingPoint(bad, margins=margins)


def objective_value(
    system: AffineFlowSystem,
    objective: Objective,
    theta: np.ndarray,
    solver: SolverConfig = SolverConfig(),
) -> tuple[float, np.ndarray]:
    """Solve the flows at theta and score the objective there.

    Raises UnstableOperatingPoint when the solved flows leave the
    objective's stable domain. Returns (value, flows).
    """
    report = solve_flows(system, theta, config=solver)
    phi = report.flows
    _check_stability(objective, theta, phi)
    return objective.value(theta, phi), phi


# ---------------------------------------------------------------------------
# Analytic engine
# ---------------------------------------------------------------------------

def analytic_gradient(
    system: AffineFlowSystem,
    objective: Objective,
    theta: np.ndarray,
    config: GradientConfig = GradientConfig(),
) -> GradientReport:
    """Exact gradient by the adjoint method.

    Order of operations: solve flows, score the objective, assemble local
    derivatives, solve the adjoint system, contract. The contraction is

        grad J = dF/dtheta + y^T (dA/dtheta phi + db/dtheta)

    with y solving (I - A)^T y = (dF/dphi)^T.
    """
    theta = system.check_theta(theta)
    if not system.has_analytic_jacobians():
        raise MissingAnalyticJacobians(
            "system declares no analytic derivatives; use the numeric_jacobian "
            "or finite_difference engine instead"
        )
    fwd = solve_flows(system, theta, config=config.solver)
    phi = fwd.flows
    _check_stability(objective, theta, phi)
    J = objective.value(theta, phi)

    dF_dphi = objective.weights * objective.rewards_dphi(theta, phi)
    if objective.rewards_dtheta is not None:
        dF_dtheta = objective.weights @ objective.rewards_dtheta(theta, phi)
    else:
        dF_dtheta = np.zeros(system.param_dim)

    adjoint_cfg = _no_recheck(config.solver)
    adj = solve_adjoint(system, theta, dF_dphi, config=adjoint_cfg)
    y = adj.flows

    grad = dF_dtheta + system.eval_dA(theta).vjp(y, phi)
    if system.eval_db is not None:
        grad = grad + y @ system.eval_db(theta)
    return GradientReport(
        gradient=grad,
        objective_value=J,
        flows=phi,
        adjoint=y,
        fp_solves=1,
        g_evals=0,
        engine="analytic",
    )


def _no_recheck(solver: SolverConfig) -> SolverConfig:
    """The forward solve already certified the spectrum; the adjoint shares
    it, so skip the repeat check."""
    if not solver.safety_check:
        return solver
    return SolverConfig(
        method=solver.method,
        fp_tol=solver.fp_tol,
        max_iter=solver.max_iter,
        anderson_depth=solver.anderson_depth,
        safety_check=False,
        kappa=solver.kappa,
    )


# ---------------------------------------------------------------------------
# Numeric-Jacobian engine
# ---------------------------------------------------------------------------

def numeric_jacobian_gradient(
    system: AffineFlowSystem,
    objective: Objective,
    theta: np.ndarray,
    config: GradientConfig = GradientConfig(),
) -> GradientReport:
    """Adjoint gradient with every local Jacobian replaced by central
    differences of the fixed-point map and the rewards.

    The flow-Jacobian probe set is restricted to columns that the declared
    sparsity pattern allows to be nonzero, so cost scales with structure,
    not dimension squared. Reward slopes come from one vectorized probe
    pair, valid because reward i reads only flow i.
    """
    theta = system.check_theta(theta)
    eps = config.eps
    d, p = system.dim, system.param_dim

    fwd = solve_flows(system, theta, config=config.solver)
    phi = fwd.flows
    _check_stability(objective, theta, phi)
    J = objective.value(theta, phi)
    g_evals = 0

    # dG/dphi columns via probes along the coordinates the sparsity allows.
    active_cols = np.unique(system.cols)
    col_data = []
    col_rows = []
    col_cols = []
    for j in active_cols:
        e = np.zeros(d)
        e[j] = eps
        col = (eval_G(system, theta, phi + e) - eval_G(system, theta, phi - e)) / (2 * eps)
        g_evals += 2
        mask = system.cols == j
        ridx = system.rows[mask]
        col_rows.append(ridx)
        col_cols.append(np.full(ridx.size, j))
        col_data.append(col[ridx])
    if col_data:
        A_hat = sp.csr_matrix(
            (np.concatenate(col_data), (np.concatenate(col_rows), np.concatenate(col_cols))),
            shape=(d, d),
        )
    else:
        A_hat = sp.csr_matrix((d, d))

    # dG/dtheta columns via probes on theta with flows held fixed.
    G_theta = np.zeros((d, p))
    for k in range(p):
        e = np.zeros(p)
        e[k] = eps
        G_theta[:, k] = (
            eval_G(system, theta + e, phi) - eval_G(system, theta - e, phi)
        ) / (2 * eps)
        g_evals += 2

    # Reward slopes along phi: one probe pair covers every queue at once.
    bump = np.full(d, eps)
    r_plus = objective.rewards(theta, phi + bump)
    r_minus = objective.rewards(theta, phi - bump)
    dF_dphi = objective.weights * (r_plus - r_minus) / (2 * eps)

    # Explicit theta dependence of the rewards, probed per parameter.
    dF_dtheta = np.zeros(p)
    if objective.explicit_theta_dependence:
        for k in range(p):
            e = np.zeros(p)
            e[k] = eps
            dF_dtheta[k] = (
                objective.value(theta + e, phi) - objective.value(theta - e, phi)
            ) / (2 * eps)

    numeric_system = AffineFlowSystem(
        dim=d,
        param_dim=p,
        eval_A=lambda _th, _M=A_hat: _M,
        eval_b=system.eval_b,
        rows=system.rows,
        cols=system.cols,
        acyclic_order=system.acyclic_order,
    )
    adj = solve_adjoint(numeric_system, theta, dF_dphi, config=_no_recheck(config.solver))
    y = adj.flows

    grad = dF_dtheta + y @ G_theta
    return GradientReport(
        gradient=grad,
        objective_value=J,
        flows=phi,
        adjoint=y,
        fp_solves=1,
        g_evals=g_evals,
        engine="numeric_jacobian",
    )


# ---------------------------------------------------------------------------
# Finite-difference-on-J engine
# ---------------------------------------------------------------------------

def finite_difference_gradient(
    system: AffineFlowSystem,
    objective: Objective,
    theta: np.ndarray,
    config: GradientConfig = GradientConfig(),
) -> GradientReport:
    """Central differences on the end-to-end objective: 2p + 1 flow solves.

    When a feasible set is supplied, each probe width shrinks to half the
    distance from theta to the boundary along that axis, keeping probes
    feasible. A coordinate flush against the boundary cannot be probed at
    all and raises BoundaryProbe naming it.
    """
    theta = system.check_theta(theta)
    p = system.param_dim
    J, phi = objective_value(system, objective, theta, solver=config.solver)
    fp_solves = 1

    widths = np.full(p, config.eps)
    if config.feasible is not None:
        dist = np.asarray(config.feasible.interior_distance(theta), dtype=float)
        for j in range(p):
            if dist[j] <= 0.0:
                raise BoundaryProbe(j)
        widths = np.minimum(widths, dist / 2.0)

    grad = np.zeros(p)
    for j in range(p):
        e = np.zeros(p)
        e[j] = widths[j]
        J_plus, _ = objective_value(system, objective, theta + e, solver=config.solver)
        J_minus, _ = objective_value(system, objective, theta - e, solver=config.solver)
        fp_solves += 2
        grad[j] = (J_plus - J_minus) / (2 * widths[j])

    return GradientReport(
        gradient=grad,
        objective_value=J,
        flows=phi,
        adjoint=None,
        fp_solves=fp_solves,
        g_evals=0,
        engine="finite_difference",
    )


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------

def compute_gradient(
    system: AffineFlowSystem,
    objective: Objective,
    theta: np.ndarray,
    config: GradientConfig = GradientConfig(),
) -> GradientReport:
    """Run the engine named in config and return its report."""
    if config.engine == "analytic":
        return analytic_gradient(system, objective, theta, config)
    if config.engine == "numeric_jacobian":
        return numeric_jacobian_gradient(system, objective, theta, config)
    return finite_difference_gradient(system, objective, theta, config)
