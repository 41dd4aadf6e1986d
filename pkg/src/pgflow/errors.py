"""Exception types shared across the package.

Every error raised by pgflow derives from PgflowError so callers can catch
the whole family at once. The CLI maps input-shaped errors to exit code 2
and numeric failures to exit code 3.
"""

from __future__ import annotations


class PgflowError(Exception):
    """Base class for all pgflow errors."""


class DimensionMismatch(PgflowError):
    """An input vector or matrix has the wrong dimension."""

    def __init__(self, what: str, expected: int, got: int):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected dimension {expected}, got {got}")


class ModelFormatError(PgflowError):
    """A model file or model description violates the schema or its
    semantic constraints (bad probabilities, dangling parameter indices)."""


class NotOpen(PgflowError):
    """Some queue has no positive-probability path to departure."""

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        super().__init__(
            f"network is not open: nodes {list(self.nodes)} cannot reach departure"
        )


class SafetyCheckFailed(PgflowError):
    """The spectral safety check could not certify a contraction
    (spectral radius estimate >= 1), so the flow fixed point may not exist."""

    def __init__(self, estimate: float):
        self.estimate = estimate
        super().__init__(
            f"spectral safety check failed: estimated spectral radius {estimate:.6g}"
        )


class NoConvergence(PgflowError):
    """An iterative solve exhausted its budget. Carries the best iterate
    seen and its residual so callers can inspect how close it got."""

    def __init__(self, iterations: int, residual_norm: float, best=None):
        self.iterations = iterations
        self.residual_norm = residual_norm
        self.best = best
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(best residual {residual_norm:.3e})"
        )


class UnstableOperatingPoint(PgflowError):
    """The operating point leaves some reward's stable domain, e.g. a queue
    whose arrival rate reaches its effective service rate."""

    def __init__(self, queues, margins=None):
        self.queues = tuple(int(q) for q in queues)
        self.margins = margins
        super().__init__(
            f"unstable operating point: stability margin <= 0 at queues {list(self.queues)}"
        )


class MissingAnalyticJacobians(PgflowError):
    """The analytic gradient engine was requested but the model does not
    declare analytic derivatives."""


class BoundaryProbe(PgflowError):
    """A finite-difference probe cannot be placed: the point sits exactly on
    the feasible boundary in the probed coordinate."""

    def __init__(self, param_index: int):
        self.param_index = int(param_index)
        super().__init__(
            f"finite-difference probe blocked at parameter {self.param_index}: "
            f"zero distance to the feasible boundary"
        )


class InfeasibleStart(PgflowError):
    """The optimizer was handed a starting point outside the feasible set."""


class AllStepsRejected(PgflowError):
    """Backtracking shrank the trial step below its floor without finding an
    acceptable point."""

    def __init__(self, floor: float = 1e-12):
        self.floor = floor
        super().__init__(f"line search rejected every trial step down to {floor:g}")
