"""Cross-checks between the three gradient engines and their failure modes."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import (
    five_queue_energy_network,
    tandem_network,
    three_queue_network,
)
import scipy.sparse as sp

from pgflow import (
    AffineFlowSystem,
    BoundaryProbe,
    GradientConfig,
    MissingAnalyticJacobians,
    Objective,
    UnstableOperatingPoint,
    compute_gradient,
    objective_value,
    random_forward_dag,
    solve_flows,
    toposort,
)


def central_difference(system, objective, theta, eps=1e-6):
    grad = np.zeros(theta.shape[0])
    for j in range(theta.shape[0]):
        step = np.zeros_like(theta)
        step[j] = eps
        plus, _ = objective_value(system, objective, theta + step)
        minus, _ = objective_value(system, objective, theta - step)
        grad[j] = (plus - minus) / (2.0 * eps)
    return grad


class TestEngineAgreement:
    @pytest.mark.parametrize("theta", [(0.8, 0.8), (0.5, 0.3), (0.15, 0.9)])
    def test_three_queue_all_engines_close(self, theta):
        bundle = three_queue_network().build()
        theta = np.asarray(theta)
        reports = {
            engine: compute_gradient(
                bundle.system, bundle.objective, theta,
                GradientConfig(engine=engine, feasible=bundle.feasible),
            )
            for engine in ("analytic", "numeric_jacobian", "finite_difference")
        }
        base = reports["analytic"].gradient
        assert np.allclose(reports["numeric_jacobian"].gradient, base, atol=1e-6)
        assert np.allclose(reports["finite_difference"].gradient, base, atol=1e-5)

    def test_analytic_matches_central_difference(self):
        bundle = three_queue_network().build()
        theta = np.array([0.45, 0.35])
        report = compute_gradient(bundle.system, bundle.objective, theta)
        fd = central_difference(bundle.system, bundle.objective, theta)
        assert np.allclose(report.gradient, fd, rtol=1e-6, atol=1e-8)

    def test_energy_model_numeric_matches_analytic(self):
        bundle = five_queue_energy_network().build()
        analytic = compute_gradient(bundle.system, bundle.objective, bundle.theta0)
        numeric = compute_gradient(
            bundle.system, bundle.objective, bundle.theta0,
            GradientConfig(engine="numeric_jacobian"),
        )
        assert np.allclose(numeric.gradient, analytic.gradient, atol=1e-5)
        fd = central_difference(bundle.system, bundle.objective, bundle.theta0)
        assert np.allclose(analytic.gradient, fd, rtol=1e-5, atol=1e-6)

    def test_pairwise_agreement_across_random_models(self):
        # per-coordinate relative agreement, skipping coordinates whose
        # magnitude sits below 1e-6. The probe width is 1e-6 rather than
        # the default: central differences carry rounding noise of about
        # |J| * 1e-16 / eps in absolute terms, and the wider probe keeps
        # that noise below the relative bound on every kept coordinate.
        engines = ("analytic", "numeric_jacobian", "finite_difference")
        worst = 0.0
        for s in range(100):
            rng = np.random.default_rng(3000 + s)
            d = int(rng.integers(5, 31))
            p = int(rng.integers(1, min(10, d - 2) + 1))
            bundle = random_forward_dag(d, p, seed=s).build()
            theta = rng.uniform(0.05, 0.95, size=p)
            grads = [
                compute_gradient(
                    bundle.system, bundle.objective, theta,
                    GradientConfig(engine=e, eps=1e-6, feasible=bundle.feasible),
                ).gradient
                for e in engines
            ]
            for i in range(3):
                for j in range(i + 1, 3):
                    ref, other = grads[i], grads[j]
                    kept = np.abs(ref) > 1e-6
                    if kept.any():
                        rel = np.abs(ref - other)[kept] / np.abs(ref)[kept]
                        worst = max(worst, float(rel.max()))
        assert worst <= 1e-4


def dense_inversion_gradient(bundle, theta: np.ndarray) -> np.ndarray:
    """Assemble the full gradient by explicitly inverting I - A."""
    system, objective = bundle.system, bundle.objective
    phi = solve_flows(system, theta).flows
    d, p = system.dim, system.param_dim
    A = system.eval_A(theta).toarray()
    dG = np.zeros((d, p))
    if system.eval_dA is not None:
        jac = system.eval_dA(theta)
        for t in range(jac.param_idx.size):
            dG[jac.rows[t], jac.param_idx[t]] += jac.coeffs[t] * phi[jac.cols[t]]
    if system.eval_db is not None:
        db = system.eval_db(theta)
        if db is not None:
            dG += db
    dF_dphi = objective.weights * objective.rewards_dphi(theta, phi)
    if objective.rewards_dtheta is not None:
        dF_dtheta = objective.weights @ objective.rewards_dtheta(theta, phi)
    else:
        dF_dtheta = np.zeros(p)
    sensitivity = np.linalg.inv(np.eye(d) - A) @ dG
    return dF_dtheta + dF_dphi @ sensitivity


class TestImplicitGradientIdentities:
    @pytest.mark.parametrize("case", ["fork", "energy", "dag"])
    def test_adjoint_route_matches_dense_inversion(self, case):
        if case == "fork":
            bundle = three_queue_network().build()
            theta = np.array([0.8, 0.8])
        elif case == "energy":
            bundle = five_queue_energy_network().build()
            theta = np.asarray(bundle.theta0, dtype=float)
        else:
            bundle = random_forward_dag(12, 4, seed=7).build()
            theta = np.full(4, 0.5)
        report = compute_gradient(bundle.system, bundle.objective, theta)
        expected = dense_inversion_gradient(bundle, theta)
        assert np.max(np.abs(report.gradient - expected)) <= 1e-8

    @pytest.mark.parametrize("case", ["fork", "energy", "dag"])
    def test_directional_difference_error_decays_quadratically(self, case):
        if case == "fork":
            bundle = three_queue_network().build()
            theta = np.array([0.5, 0.5])
        elif case == "energy":
            bundle = five_queue_energy_network().build()
            theta = np.asarray(bundle.theta0, dtype=float)
        else:
            bundle = random_forward_dag(12, 4, seed=7).build()
            theta = np.full(4, 0.5)
        grad = compute_gradient(bundle.system, bundle.objective, theta).gradient
        rng = np.random.default_rng(0)
        for _ in range(2):
            v = rng.standard_normal(theta.shape[0])
            v /= np.linalg.norm(v)
            errs = []
            for h in (1e-3, 1e-4, 1e-5):
                plus, _ = objective_value(bundle.system, bundle.objective, theta + h * v)
                minus, _ = objective_value(bundle.system, bundle.objective, theta - h * v)
                errs.append(abs((plus - minus) / (2.0 * h) - grad @ v))
            assert errs[0] <= 1e-4 * (1.0 + np.linalg.norm(grad))
            # truncation is C h^2; calibrate C at the widest step and allow
            # an absolute floor for rounding at the narrowest
            scale = 2.0 * errs[0] / 1e-6
            assert errs[1] <= scale * 1e-8 + 1e-9
            assert errs[2] <= scale * 1e-10 + 1e-9


class TestQuadraticSyntheticObjective:
    def test_probe_engine_is_exact_on_quadratics(self):
        # flows ignore theta entirely, so the whole gradient comes from the
        # objective probes; central differences are exact on quadratics up
        # to rounding
        d = 2
        A = sp.csr_matrix(np.array([[0.0, 0.0], [0.5, 0.0]]))
        system = AffineFlowSystem(
            dim=d,
            param_dim=2,
            eval_A=lambda theta: A,
            eval_b=lambda theta: np.ones(d),
            rows=np.array([1]),
            cols=np.array([0]),
            acyclic_order=toposort(d, np.array([1]), np.array([0])),
        )
        objective = Objective(
            weights=np.ones(d),
            rewards=lambda theta, phi: np.full(d, float(theta @ theta) / d),
            rewards_dphi=lambda theta, phi: np.zeros(d),
        )
        for theta in (np.array([0.3, -0.7]), np.array([1.5, 2.0])):
            report = compute_gradient(
                system, objective, theta,
                GradientConfig(engine="finite_difference"),
            )
            assert np.allclose(report.gradient, 2.0 * theta, atol=1e-6)
            assert report.fp_solves == 5


class TestCounters:
    def test_solve_and_evaluation_counts(self):
        bundle = three_queue_network().build()
        theta = np.array([0.8, 0.8])
        analytic = compute_gradient(bundle.system, bundle.objective, theta)
        assert (analytic.fp_solves, analytic.g_evals) == (1, 0)
        assert analytic.engine == "analytic"

        numeric = compute_gradient(
            bundle.system, bundle.objective, theta,
            GradientConfig(engine="numeric_jacobian"),
        )
        # two occupied source columns and two parameters, probed centrally
        assert (numeric.fp_solves, numeric.g_evals) == (1, 8)

        fd = compute_gradient(
            bundle.system, bundle.objective, theta,
            GradientConfig(engine="finite_difference", feasible=bundle.feasible),
        )
        assert (fd.fp_solves, fd.g_evals) == (5, 0)

    def test_parameter_free_network(self):
        bundle = tandem_network().build()
        for engine in ("analytic", "numeric_jacobian", "finite_difference"):
            report = compute_gradient(
                bundle.system, bundle.objective, bundle.theta0,
                GradientConfig(engine=engine, feasible=bundle.feasible),
            )
            assert report.gradient.shape == (0,)
            assert report.fp_solves == 1


class TestAdjoint:
    def test_adjoint_solves_transposed_system(self):
        bundle = three_queue_network().build()
        theta = np.array([0.8, 0.8])
        report = compute_gradient(bundle.system, bundle.objective, theta)
        A = bundle.system.eval_A(theta)
        rhs = bundle.objective.weights * bundle.objective.rewards_dphi(
            theta, report.flows
        )
        y = report.adjoint
        assert np.allclose(y - A.T @ y, rhs, atol=1e-10)


class TestBoundaries:
    def test_probe_at_saturated_budget_raises(self):
        bundle = five_queue_energy_network().build()
        # default start spends the whole budget: no interior room on any axis
        with pytest.raises(BoundaryProbe) as exc:
            compute_gradient(
                bundle.system, bundle.objective, bundle.theta0,
                GradientConfig(engine="finite_difference", feasible=bundle.feasible),
            )
        assert exc.value.param_index == 0

    def test_probe_at_box_edge_raises(self):
        bundle = three_queue_network().build()
        with pytest.raises(BoundaryProbe) as exc:
            compute_gradient(
                bundle.system, bundle.objective, np.array([0.5, 0.0]),
                GradientConfig(engine="finite_difference", feasible=bundle.feasible),
            )
        assert exc.value.param_index == 1

    def test_width_shrinks_near_boundary(self):
        bundle = three_queue_network().build()
        theta = np.array([1e-9, 0.5])
        report = compute_gradient(
            bundle.system, bundle.objective, theta,
            GradientConfig(engine="finite_difference", feasible=bundle.feasible),
        )
        reference = compute_gradient(bundle.system, bundle.objective, theta)
        assert np.all(np.isfinite(report.gradient))
        # widths this small cost accuracy but the estimate must stay sane
        assert np.allclose(report.gradient, reference.gradient, atol=1e-2)


class TestFailureModes:
    def test_analytic_requires_jacobian_callbacks(self):
        bundle = three_queue_network().build()
        stripped = AffineFlowSystem(
            dim=bundle.system.dim,
            param_dim=bundle.system.param_dim,
            eval_A=bundle.system.eval_A,
            eval_b=bundle.system.eval_b,
            rows=bundle.system.rows,
            cols=bundle.system.cols,
            acyclic_order=bundle.system.acyclic_order,
        )
        with pytest.raises(MissingAnalyticJacobians):
            compute_gradient(stripped, bundle.objective, np.array([0.5, 0.5]))
        # the probing engine works without analytic structure
        report = compute_gradient(
            stripped, bundle.objective, np.array([0.5, 0.5]),
            GradientConfig(engine="numeric_jacobian"),
        )
        full = compute_gradient(bundle.system, bundle.objective, np.array([0.5, 0.5]))
        assert np.allclose(report.gradient, full.gradient, atol=1e-6)

    def test_unstable_point_raises_with_queue_indices(self):
        bundle = three_queue_network(mu=(6.0, 3.9, 7.0)).build()
        theta = np.array([1.0, 0.5])
        with pytest.raises(UnstableOperatingPoint) as exc:
            objective_value(bundle.system, bundle.objective, theta)
        assert 1 in np.asarray(exc.value.queues)
        with pytest.raises(UnstableOperatingPoint):
            compute_gradient(bundle.system, bundle.objective, theta)

    def test_unknown_engine_rejected(self):
        bundle = three_queue_network().build()
        with pytest.raises(ValueError):
            compute_gradient(
                bundle.system, bundle.objective, np.array([0.5, 0.5]),
                GradientConfig(engine="autodiff"),
            )
