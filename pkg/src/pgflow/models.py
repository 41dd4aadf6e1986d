"""Model library: open routing networks with parametric links, an energy-
constrained processing network, and a seeded random benchmark generator.

Each model builds into a ModelBundle: the affine flow system, the
objective, the feasible parameter set, and a default starting point. The
bundle is what the solvers, optimizer, CLI, and simulator all consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import (
    AffineFlowSystem,
    Box,
    BudgetSimplex,
    FeasibleSet,
    Objective,
    ParamJacobian,
    toposort,
)
from .errors import ModelFormatError, NotOpen, UnstableOperatingPoint

__all__ = [
    "FixedLink",
    "ControlledLink",
    "Link",
    "ModelBundle",
    "JacksonNetwork",
    "EnergyNetwork",
    "QueueMetrics",
    "queue_metrics",
    "random_forward_dag",
]

_PROB_TOL = 1e-9


# ---------------------------------------------------------------------------
# Links
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedLink:
    """Routing link with a constant probability. target None = departure."""

    source: int
    target: Optional[int]
    prob: float


@dataclass(frozen=True)
class ControlledLink:
    """Routing link tied to one parameter. In the primary role the
    probability is offset + theta[param]; in the complement role it is
    1 - offset - theta[param], pairing with a primary link on the same
    parameter. Leaving the complement out routes the remaining mass to
    departure instead."""

    source: int
    target: Optional[int]
    param: int
    offset: float = 0.0
    complement: bool = False

    @property
    def coeff(self) -> float:
        """Slope of the probability in theta[param]."""
        return -1.0 if self.complement else 1.0

    @property
    def const(self) -> float:
        """Intercept of the probability: prob = const + coeff * theta."""
        return 1.0 - self.offset if self.complement else self.offset


Link = FixedLink | ControlledLink


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelBundle:
    """Everything downstream code needs to solve, differentiate, optimize,
    or simulate one concrete model instance."""

    system: AffineFlowSystem
    objective: Objective
    feasible: FeasibleSet
    theta0: np.ndarray
    kind: str
    network: object
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _link_prob_range(link: Link, bounds: Box) -> tuple[float, float]:
    if isinstance(link, FixedLink):
        return link.prob, link.prob
    lo = bounds.lower[link.param]
    hi = bounds.upper[link.param]
    a = link.const + link.coeff * lo
    b = link.const + link.coeff * hi
    return min(a, b), max(a, b)


def _validate_links(d: int, p: int, links, bounds: Box) -> None:
    for t, link in enumerate(links):
        if not (0 <= link.source < d):
            raise ModelFormatError(f"link {t}: source {link.source} out of range")
        if link.target is not None and not (0 <= link.target < d):
            raise ModelFormatError(f"link {t}: target {link.target} out of range")
        if link.target == link.source:
            raise ModelFormatError(f"link {t}: self-loop at queue {link.source}")
        if isinstance(link, ControlledLink):
            if not (0 <= link.param < p):
                raise ModelFormatError(f"link {t}: parameter {link.param} out of range")
        lo, hi = _link_prob_range(link, bounds)
        if lo < -_PROB_TOL or hi > 1.0 + _PROB_TOL:
            raise ModelFormatError(
                f"link {t}: probability range [{lo:.6g}, {hi:.6g}] leaves [0, 1] "
                f"over the parameter box"
            )
    # Outflow per source is affine in theta; bound its exact maximum over
    # the box. Coefficients are grouped per (source, parameter) so
    # complementary pairs cancel instead of double-counting.
    worst = np.zeros(d)
    grouped: dict[tuple[int, int], float] = {}
    for link in links:
        if isinstance(link, FixedLink):
            worst[link.source] += link.prob
        else:
            worst[link.source] += link.const
            key = (link.source, link.param)
            grouped[key] = grouped.get(key, 0.0) + link.coeff
    for (src, param), c in grouped.items():
        worst[src] += max(c * bounds.lower[param], c * bounds.upper[param])
    bad = np.nonzero(worst > 1.0 + _PROB_TOL)[0]
    if bad.size:
        raise ModelFormatError(
            f"total outflow probability can exceed 1 at queues {bad.tolist()}"
        )


def _check_open(d: int, prob_edges: list[tuple[int, Optional[int], float]]) -> None:
    """Every queue must reach departure along positive-probability links.
    prob_edges holds (source, target-or-None, probability) at a
    representative parameter value."""
    outflow = np.zeros(d)
    direct = np.zeros(d, dtype=bool)
    preds: list[list[int]] = [[] for _ in range(d)]
    for s, t, pr in prob_edges:
        if pr <= 0.0:
            continue
        outflow[s] += pr
        if t is None:
            direct[s] = True
        else:
            preds[t].append(s)
    direct |= outflow < 1.0 - 1e-12
    can_exit = direct.copy()
    stack = list(np.nonzero(can_exit)[0])
    while stack:
        v = stack.pop()
        for u in preds[v]:
            if not can_exit[u]:
                can_exit[u] = True
                stack.append(u)
    trapped = np.nonzero(~can_exit)[0]
    if trapped.size:
        raise NotOpen(trapped)


def _csr_structure(d: int, rows: np.ndarray, cols: np.ndarray):
    """Canonical CSR scaffolding for a fixed sparsity pattern. Returns
    (u_rows, u_cols, indices, indptr, slots) where slots[t] is the data
    position of entry t, and duplicate (row, col) pairs share a slot."""
    keys = rows * d + cols
    uniq, slots = np.unique(keys, return_inverse=True)
    u_rows = uniq // d
    u_cols = uniq % d
    indptr = np.searchsorted(u_rows, np.arange(d + 1)).astype(np.int32)
    indices = u_cols.astype(np.int32)
    return u_rows, u_cols, indices, indptr, slots


# ---------------------------------------------------------------------------
# Parametric routing network
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JacksonNetwork:
    """Open network of exponential queues with parametric routing.

    mu[i] is the service rate, lam_ext[i] the external arrival rate, and
    `links` the routing table. Mass not covered by a queue's links departs.
    The objective is the summed congestion cost phi_i / (mu_i - phi_i),
    optionally weighted per queue; its stable domain is phi < mu.

    Parameters live in `bounds` (default unit box). Routing probabilities
    must stay within [0, 1] for every parameter choice in the box.
    """

    mu: np.ndarray
    lam_ext: np.ndarray
    links: tuple
    param_dim: int
    bounds: Optional[Box] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        lam = np.asarray(self.lam_ext, dtype=float)
        if mu.ndim != 1 or mu.shape != lam.shape:
            raise ModelFormatError("mu and lam_ext must be 1-d arrays of equal length")
        if np.any(mu <= 0):
            raise ModelFormatError("service rates must be positive")
        if np.any(lam < 0):
            raise ModelFormatError("external arrival rates must be nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam_ext", lam)
        object.__setattr__(self, "links", tuple(self.links))
        if self.param_dim < 0:
            raise ModelFormatError("param_dim must be nonnegative")
        bounds = self.bounds
        if bounds is None:
            bounds = Box((0.0,) * self.param_dim, (1.0,) * self.param_dim)
        elif bounds.dim != self.param_dim:
            raise ModelFormatError("bounds dimension does not match param_dim")
        object.__setattr__(self, "bounds", bounds)
        w = self.weights
        if w is not None:
            w = np.asarray(w, dtype=float)
            if w.shape != mu.shape:
                raise ModelFormatError("weights must match the number of queues")
        object.__setattr__(self, "weights", w)
        _validate_links(self.dim, self.param_dim, self.links, bounds)
        self._check_openness()

    @property
    def dim(self) -> int:
        return self.mu.size

    def _representative_theta(self) -> np.ndarray:
        lo = np.asarray(self.bounds.lower)
        hi = np.asarray(self.bounds.upper)
        return 0.5 * (lo + hi)

    def _link_probs(self, theta: np.ndarray) -> np.ndarray:
        const = np.array(
            [l.prob if isinstance(l, FixedLink) else l.const for l in self.links]
        )
        if self.param_dim == 0 or not self.links:
            return const
        coeff = np.array(
            [0.0 if isinstance(l, FixedLink) else l.coeff for l in self.links]
        )
        pidx = np.array(
            [0 if isinstance(l, FixedLink) else l.param for l in self.links], dtype=int
        )
        return const + coeff * np.asarray(theta)[pidx]

    def _check_openness(self) -> None:
        probs = self._link_probs(self._representative_theta())
        edges = [(l.source, l.target, pr) for l, pr in zip(self.links, probs)]
        _check_open(self.dim, edges)

    def routing_matrix(self, theta: np.ndarray) -> np.ndarray:
        """Dense routing matrix P(theta): P[i, j] is the probability a job
        finishing at queue i moves to queue j. Row deficits are departures."""
        d = self.dim
        P = np.zeros((d, d))
        probs = self._link_probs(np.asarray(theta, dtype=float))
        for link, pr in zip(self.links, probs):
            if link.target is not None:
                P[link.source, link.target] += pr
        return P

    def simulation_inputs(self, theta: np.ndarray):
        """(lam_ext, effective service rates, routing matrix) at theta."""
        return self.lam_ext, self.mu, self.routing_matrix(theta)

    def build(self, theta0: Optional[np.ndarray] = None) -> ModelBundle:
        d, p = self.dim, self.param_dim
        internal = [
            (t, l) for t, l in enumerate(self.links) if l.target is not None
        ]
        if internal:
            l_rows = np.array([l.target for _, l in internal], dtype=np.int64)
            l_cols = np.array([l.source for _, l in internal], dtype=np.int64)
        else:
            l_rows = np.zeros(0, dtype=np.int64)
            l_cols = np.zeros(0, dtype=np.int64)
        u_rows, u_cols, indices, indptr, slots = _csr_structure(d, l_rows, l_cols)
        nnz = u_rows.size

        const = np.array(
            [l.prob if isinstance(l, FixedLink) else l.const for _, l in internal]
        )
        coeff = np.array(
            [0.0 if isinstance(l, FixedLink) else l.coeff for _, l in internal]
        )
        pidx = np.array(
            [0 if isinstance(l, FixedLink) else l.param for _, l in internal],
            dtype=np.int64,
        )

        def eval_A(theta: np.ndarray) -> sp.csr_matrix:
            probs = const + (coeff * theta[pidx] if p else 0.0)
            data = np.zeros(nnz)
            np.add.at(data, slots, probs)
            return sp.csr_matrix((data, indices, indptr), shape=(d, d))

        ctrl = [t for t, (_, l) in enumerate(internal) if isinstance(l, ControlledLink)]
        jac = ParamJacobian(
            param_idx=pidx[ctrl],
            rows=l_rows[ctrl],
            cols=l_cols[ctrl],
            coeffs=coeff[ctrl],
            param_dim=p,
        )

        lam = self.lam_ext

        system = AffineFlowSystem(
            dim=d,
            param_dim=p,
            eval_A=eval_A,
            eval_b=lambda _theta: lam,
            rows=u_rows,
            cols=u_cols,
            eval_dA=lambda _theta: jac,
            eval_db=None,
            acyclic_order=toposort(d, u_rows, u_cols),
        )

        mu = self.mu
        objective = Objective(
            weights=self.weights if self.weights is not None else np.ones(d),
            rewards=lambda _th, phi: phi / (mu - phi),
            rewards_dphi=lambda _th, phi: mu / (mu - phi) ** 2,
            rewards_dtheta=None,
            stability_margin=lambda _th, phi: mu - phi,
        )

        if theta0 is None:
            theta0 = self._representative_theta()
        theta0 = np.asarray(theta0, dtype=float)
        return ModelBundle(
            system=system,
            objective=objective,
            feasible=self.bounds,
            theta0=theta0,
            kind="jackson",
            network=self,
            meta={"dim": d, "param_dim": p},
        )


# ---------------------------------------------------------------------------
# Energy-constrained processing network
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnergyNetwork:
    """Processing network with fixed routing and per-queue energy shares.

    The parameter theta_i is queue i's energy allocation; allocations are
    nonnegative and share a budget. The duty factor beta_i = theta_i /
    (gamma_i + mu_i) scales the service rate to mu_i * beta_i. The
    objective trades congestion against energy draw:

        sum_i [ w_delay * phi_i / (mu_i beta_i - phi_i)
                + w_energy * gamma_i * beta_i ]

    Flows do not depend on theta here; the gradient is purely the explicit
    term, and the flow solve certifies feasibility of the allocation.
    """

    routing: np.ndarray
    lam_ext: np.ndarray
    mu: np.ndarray
    gamma: np.ndarray
    budget: float
    w_delay: float = 1.0
    w_energy: float = 1.0

    def __post_init__(self):
        P = np.asarray(self.routing, dtype=float)
        lam = np.asarray(self.lam_ext, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        gam = np.asarray(self.gamma, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ModelFormatError("routing must be a square matrix")
        d = P.shape[0]
        for arr, name in ((lam, "lam_ext"), (mu, "mu"), (gam, "gamma")):
            if arr.shape != (d,):
                raise ModelFormatError(f"{name} must have length {d}")
        if np.any(P < 0) or np.any(P > 1):
            raise ModelFormatError("routing entries must be probabilities")
        if np.any(P.sum(axis=1) > 1.0 + _PROB_TOL):
            raise ModelFormatError("routing row sums must not exceed 1")
        if np.any(np.diag(P) != 0):
            raise ModelFormatError("routing must not contain self-loops")
        if np.any(mu <= 0) or np.any(gam < 0) or np.any(lam < 0):
            raise ModelFormatError("rates must be nonnegative (mu positive)")
        if self.budget <= 0:
            raise ModelFormatError("budget must be positive")
        object.__setattr__(self, "routing", P)
        object.__setattr__(self, "lam_ext", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", gam)
        edges = [
            (i, j, P[i, j]) for i in range(d) for j in range(d) if P[i, j] > 0
        ]
        _check_open(d, edges)

    @property
    def dim(self) -> int:
        return self.mu.size

    def beta(self, theta: np.ndarray) -> np.ndarray:
        """Duty factor of each queue under allocation theta."""
        return np.asarray(theta, dtype=float) / (self.gamma + self.mu)

    def build(self, theta0: Optional[np.ndarray] = None) -> ModelBundle:
        d = self.dim
        A = sp.csr_matrix(self.routing.T)
        A.sum_duplicates()
        rows, cols = A.nonzero()
        empty_jac = ParamJacobian(
            param_idx=np.zeros(0, dtype=np.int64),
            rows=np.zeros(0, dtype=np.int64),
            cols=np.zeros(0, dtype=np.int64),
            coeffs=np.zeros(0),
            param_dim=d,
        )
        lam = self.lam_ext
        system = AffineFlowSystem(
            dim=d,
            param_dim=d,
            eval_A=lambda _theta: A,
            eval_b=lambda _theta: lam,
            rows=rows.astype(np.int64),
            cols=cols.astype(np.int64),
            eval_dA=lambda _theta: empty_jac,
            eval_db=None,
            acyclic_order=toposort(d, rows, cols),
        )

        mu, gam = self.mu, self.gamma
        w1, w2 = self.w_delay, self.w_energy
        denom = gam + mu

        def rewards(theta, phi):
            b = theta / denom
            return w1 * phi / (mu * b - phi) + w2 * gam * b

        def rewards_dphi(theta, phi):
            b = theta / denom
            return w1 * mu * b / (mu * b - phi) ** 2

        def rewards_dtheta(theta, phi):
            b = theta / denom
            diag = (-w1 * mu * phi / (mu * b - phi) ** 2 + w2 * gam) / denom
            out = np.zeros((d, d))
            np.fill_diagonal(out, diag)
            return out

        def stability_margin(theta, phi):
            return mu * (theta / denom) - phi

        objective = Objective(
            weights=np.ones(d),
            rewards=rewards,
            rewards_dphi=rewards_dphi,
            rewards_dtheta=rewards_dtheta,
            stability_margin=stability_margin,
        )

        if theta0 is None:
            theta0 = np.full(d, self.budget / d)
        theta0 = np.asarray(theta0, dtype=float)
        return ModelBundle(
            system=system,
            objective=objective,
            feasible=BudgetSimplex(d, self.budget),
            theta0=theta0,
            kind="epn",
            network=self,
            meta={"dim": d, "param_dim": d, "budget": self.budget},
        )


# ---------------------------------------------------------------------------
# Random benchmark generator
# ---------------------------------------------------------------------------

def random_forward_dag(d: int, p: int, seed: int) -> JacksonNetwork:
    """Seeded random feed-forward network with d queues and p controls.

    Queues are numbered along a spine 0, 1, ..., d-1; external work (rate 4)
    enters at queue 0, queue d-2 feeds queue d-1 deterministically, and
    queue d-1 departs. Every other queue i splits its output between the
    next spine queue i+1 and one skip target drawn from {i+2, ..., d-1}.
    p of these splits (chosen without replacement) are controlled: the
    skip link carries probability theta_k and the spine link 1 - theta_k.
    Uncontrolled splits get a fixed spine probability drawn from
    (0.2, 0.8). Service rates alternate 8 (even index) and 12 (odd).

    The same (d, p, seed) triple always produces the same network.
    """
    if d < 3:
        raise ModelFormatError("need at least 3 queues")
    if not (0 <= p <= d - 2):
        raise ModelFormatError(f"need 0 <= p <= d - 2 control splits, got p={p}")
    rng = np.random.default_rng(seed)
    if p:
        branch = np.sort(rng.choice(d - 2, size=p, replace=False))
    else:
        branch = np.zeros(0, dtype=int)
    branch_set = set(int(i) for i in branch)
    param_of = {int(n): k for k, n in enumerate(branch)}

    links: list[Link] = []
    for i in range(d - 2):
        target = int(rng.integers(i + 2, d))
        if i in branch_set:
            k = param_of[i]
            links.append(ControlledLink(i, i + 1, param=k, complement=True))
            links.append(ControlledLink(i, target, param=k))
        else:
            x = float(rng.uniform(0.2, 0.8))
            links.append(FixedLink(i, i + 1, x))
            links.append(FixedLink(i, target, 1.0 - x))
    links.append(FixedLink(d - 2, d - 1, 1.0))

    mu = np.where(np.arange(d) % 2 == 0, 8.0, 12.0)
    lam = np.zeros(d)
    lam[0] = 4.0
    return JacksonNetwork(
        mu=mu, lam_ext=lam, links=tuple(links), param_dim=p
    )


# ---------------------------------------------------------------------------
# Product-form metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueueMetrics:
    """Per-queue steady-state metrics of a stable product-form network."""

    utilization: np.ndarray
    mean_lengths: np.ndarray

    def marginal_pmf(self, levels: int) -> np.ndarray:
        """Occupancy probabilities P(N_i = n) = (1 - rho_i) rho_i^n for
        n < levels, one row per queue."""
        n = np.arange(levels)
        rho = self.utilization[:, None]
        return (1.0 - rho) * rho ** n


def queue_metrics(rho) -> QueueMetrics:
    """Utilizations, mean queue lengths rho / (1 - rho), and the geometric
    occupancy marginals for per-queue loads rho.

    Raises UnstableOperatingPoint when any load reaches 1."""
    r = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(r < 0):
        raise ValueError("utilization must be nonnegative")
    bad = np.flatnonzero(r >= 1.0)
    if bad.size:
        raise UnstableOperatingPoint(bad, margins=1.0 - r)
    return QueueMetrics(utilization=r, mean_lengths=r / (1.0 - r))
