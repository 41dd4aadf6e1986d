"""Projected gradient descent over a feasible parameter set.

The iteration is theta_{k+1} = project(theta_k - eta_k * grad J(theta_k))
with either a constant step or Armijo backtracking. Stopping conditions are
checked in a fixed order at every iterate before stepping:

  1. RelativeJ: |J_k - J_{k-1}| / max(1, |J_{k-1}|) <= eps_J
  2. GradNorm:  ||grad J_k||_2 <= eps_grad
  3. MaxIter:   k reached the iteration budget

A fully pinned iterate (the projection of a full trial step returns the
point itself, which backtracking could never accept) is stationary for the
constrained problem, so Armijo terminates with GradNorm there instead of
burning the backtracking floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import FeasibleSet, GradientReport, AffineFlowSystem, Objective
from .errors import AllStepsRejected, InfeasibleStart, UnstableOperatingPoint
from .gradients import GradientConfig, compute_gradient, objective_value

__all__ = [
    "Constant",
    "Armijo",
    "StepRule",
    "OptimizeConfig",
    "OptimizeTrace",
    "projected_descent",
]

_STEP_FLOOR = 1e-12


@dataclass(frozen=True)
class Constant:
    """Fixed step size. Accepts unconditionally, except that a step landing
    on an unstable operating point is retried at half the size."""

    eta: float = 0.05

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("step size must be positive")


@dataclass(frozen=True)
class Armijo:
    """Backtracking line search: accept the first t in {eta0, eta0*shrink,
    ...} whose projected step decreases J by at least slope * t * ||g||^2."""

    eta0: float = 1.0
    shrink: float = 0.5
    slope: float = 1e-4

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("initial step must be positive")
        if not (0 < self.shrink < 1):
            raise ValueError("shrink factor must lie in (0, 1)")
        if not (0 < self.slope < 1):
            raise ValueError("slope must lie in (0, 1)")


StepRule = Constant | Armijo


@dataclass(frozen=True)
class OptimizeConfig:
    step_rule: StepRule = field(default_factory=lambda: Constant(0.05))
    eps_J: float = 1e-6
    eps_grad: float = 1e-4
    max_iter: int = 500
    gradient: GradientConfig = field(default_factory=GradientConfig)

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass(frozen=True, eq=False)
class OptimizeTrace:
    """One row per visited iterate (the start counts), plus bookkeeping.

    steps[k] is the accepted step size that produced iterate k; row 0 has
    step 0. fp_solves and g_evals aggregate all solver work, including
    rejected line-search trials.
    """

    thetas: np.ndarray
    objective_values: np.ndarray
    grad_norms: np.ndarray
    steps: np.ndarray
    termination: str
    fp_solves: int
    g_evals: int

    @property
    def iterations(self) -> int:
        return len(self.objective_values) - 1

    @property
    def theta_star(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def J_star(self) -> float:
        return float(self.objective_values[-1])


class _Run:
    """Mutable accumulator the loop writes into; frozen trace comes out."""

    def __init__(self):
        self.thetas: list[np.ndarray] = []
        self.J: list[float] = []
        self.gn: list[float] = []
        self.steps: list[float] = []
        self.fp_solves = 0
        self.g_evals = 0

    def record(self, theta, report: GradientReport, step: float):
        self.thetas.append(np.array(theta, copy=True))
        self.J.append(report.objective_value)
        self.gn.append(float(np.linalg.norm(report.gradient)))
        self.steps.append(step)

    def freeze(self, termination: str) -> OptimizeTrace:
        return OptimizeTrace(
            thetas=np.array(self.thetas),
            objective_values=np.array(self.J),
            grad_norms=np.array(self.gn),
            steps=np.array(self.steps),
            termination=termination,
            fp_solves=self.fp_solves,
            g_evals=self.g_evals,
        )


def projected_descent(
    system: AffineFlowSystem,
    objective: Objective,
    theta0: np.ndarray,
    feasible: FeasibleSet,
    config: OptimizeConfig = OptimizeConfig(),
) -> OptimizeTrace:
    """Minimize the objective over the feasible set from theta0.

    Raises InfeasibleStart when theta0 is outside the set and
    AllStepsRejected (with the partial trace attached as .trace) when the
    line search exhausts its floor.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    if not feasible.contains(theta):
        raise InfeasibleStart(f"starting point {theta!r} is outside the feasible set")
    rule = config.step_rule
    gcfg = config.gradient

    run = _Run()
    report = compute_gradient(system, objective, theta, gcfg)
    run.fp_solves += report.fp_solves
    run.g_evals += report.g_evals
    run.record(theta, report, 0.0)

    J_prev: Optional[float] = None
    k = 0
    while True:
        J_k = report.objective_value
        g_k = report.gradient
        if J_prev is not None and abs(J_k - J_prev) / max(1.0, abs(J_prev)) <= config.eps_J:
            return run.freeze("RelativeJ")
        if np.linalg.norm(g_k) <= config.eps_grad:
            return run.freeze("GradNorm")
        if k == config.max_iter:
            return run.freeze("MaxIter")

        if isinstance(rule, Armijo):
            theta, report, step = _armijo_step(
                system, objective, theta, feasible, rule, gcfg, J_k, g_k, run
            )
            if report is None:
                # Full trial step projects back onto the iterate: the
                # negative gradient points out of the set everywhere, a
                # constrained stationary point.
                return run.freeze("GradNorm")
        else:
            theta, report, step = _constant_step(
                system, objective, theta, feasible, rule, gcfg, g_k, run
            )
        run.record(theta, report, step)
        J_prev = J_k
        k += 1


def _constant_step(system, objective, theta, feasible, rule: Constant, gcfg, g_k, run: _Run):
    t = rule.eta
    while t >= _STEP_FLOOR:
        cand = feasible.project(theta - t * g_k)
        try:
            report = compute_gradient(system, objective, cand, gcfg)
            run.fp_solves += report.fp_solves
            run.g_evals += report.g_evals
            return cand, report, t
        except UnstableOperatingPoint:
            # The landed point left the stable domain; retry shorter. The
            # forward solve that exposed this still cost one solve.
            run.fp_solves += 1
            t *= 0.5
    exc = AllStepsRejected(_STEP_FLOOR)
    exc.trace = run.freeze("AllStepsRejected")
    raise exc


def _armijo_step(system, objective, theta, feasible, rule: Armijo, gcfg, J_k, g_k, run: _Run):
    cand_full = feasible.project(theta - rule.eta0 * g_k)
    if np.array_equal(cand_full, theta):
        return theta, None, 0.0
    gg = float(g_k @ g_k)
    t = rule.eta0
    while t >= _STEP_FLOOR:
        cand = feasible.project(theta - t * g_k)
        try:
            J_c, _ = objective_value(system, objective, cand, solver=gcfg.solver)
            run.fp_solves += 1
        except UnstableOperatingPoint:
            run.fp_solves += 1
            t *= rule.shrink
            continue
        if J_c <= J_k - rule.slope * t * gg:
            report = compute_gradient(system, objective, cand, gcfg)
            run.fp_solves += report.fp_solves
            run.g_evals += report.g_evals
            return cand, report, t
        t *= rule.shrink
    exc = AllStepsRejected(_STEP_FLOOR)
    exc.trace = run.freeze("AllStepsRejected")
    raise exc
