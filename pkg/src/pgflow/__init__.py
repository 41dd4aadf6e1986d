"""pgflow: deterministic steady-state optimization for open queueing
networks.

The pipeline: describe a parametric network model, solve its traffic-flow
fixed point, differentiate the steady-state objective exactly through the
fixed point with one adjoint solve, and run projected gradient descent
over the feasible parameter set. A discrete-event simulator provides an
independent statistical check on the deterministic results.
"""

from .core import (
    AffineFlowSystem,
    Box,
    BudgetSimplex,
    CheckResult,
    FeasibleSet,
    GradientReport,
    Objective,
    ParamJacobian,
    SolveReport,
    eval_G,
    spectral_safety_check,
    toposort,
)
from .errors import (
    AllStepsRejected,
    BoundaryProbe,
    DimensionMismatch,
    InfeasibleStart,
    MissingAnalyticJacobians,
    ModelFormatError,
    NoConvergence,
    NotOpen,
    PgflowError,
    SafetyCheckFailed,
    UnstableOperatingPoint,
)
from .gradients import (
    ENGINES,
    GradientConfig,
    analytic_gradient,
    compute_gradient,
    finite_difference_gradient,
    numeric_jacobian_gradient,
    objective_value,
)
from .models import (
    ControlledLink,
    EnergyNetwork,
    FixedLink,
    JacksonNetwork,
    ModelBundle,
    QueueMetrics,
    queue_metrics,
    random_forward_dag,
)
from .modelio import (
    load_model,
    model_from_dict,
    model_schema,
    model_to_dict,
    save_model,
)
from .optimize import (
    Armijo,
    Constant,
    OptimizeConfig,
    OptimizeTrace,
    StepRule,
    projected_descent,
)
from .sim import (
    GofResult,
    SimConfig,
    SimReport,
    geometric_fit_test,
    geometric_pmf,
    simulate_network,
)
from .solvers import SolverConfig, solve_adjoint, solve_flows, solve_linear

__version__ = "0.1.0"

__all__ = [
    "AffineFlowSystem",
    "AllStepsRejected",
    "Armijo",
    "BoundaryProbe",
    "Box",
    "BudgetSimplex",
    "CheckResult",
    "Constant",
    "ControlledLink",
    "DimensionMismatch",
    "ENGINES",
    "EnergyNetwork",
    "FeasibleSet",
    "FixedLink",
    "GofResult",
    "GradientConfig",
    "GradientReport",
    "InfeasibleStart",
    "JacksonNetwork",
    "MissingAnalyticJacobians",
    "ModelBundle",
    "ModelFormatError",
    "NoConvergence",
    "NotOpen",
    "Objective",
    "OptimizeConfig",
    "OptimizeTrace",
    "ParamJacobian",
    "PgflowError",
    "QueueMetrics",
    "SafetyCheckFailed",
    "SimConfig",
    "SimReport",
    "SolveReport",
    "SolverConfig",
    "StepRule",
    "UnstableOperatingPoint",
    "analytic_gradient",
    "compute_gradient",
    "eval_G",
    "finite_difference_gradient",
    "geometric_fit_test",
    "geometric_pmf",
    "load_model",
    "model_from_dict",
    "model_schema",
    "model_to_dict",
    "numeric_jacobian_gradient",
    "objective_value",
    "projected_descent",
    "queue_metrics",
    "random_forward_dag",
    "save_model",
    "simulate_network",
    "solve_adjoint",
    "solve_flows",
    "solve_linear",
    "spectral_safety_check",
    "toposort",
    "__version__",
]
