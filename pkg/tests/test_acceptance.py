"""Acceptance gate: one test per release criterion, frozen tolerances.

Each test carries its reference values as literals. The conftest summary
hook prints a one-line verdict per criterion at the end of the run.
"""
from __future__ import annotations

import time

import numpy as np

from conftest import (
    five_queue_energy_network,
    three_queue_network,
)
from pgflow import (
    Armijo,
    Constant,
    GradientConfig,
    OptimizeConfig,
    SimConfig,
    compute_gradient,
    geometric_pmf,
    objective_value,
    projected_descent,
    random_forward_dag,
    simulate_network,
    solve_flows,
)


def test_criterion_1_three_queue_golden_trace():
    start = time.perf_counter()
    bundle = three_queue_network().build(theta0=np.array([0.8, 0.8]))
    system, objective, theta0 = bundle.system, bundle.objective, bundle.theta0

    flows = solve_flows(system, theta0).flows
    assert np.max(np.abs(flows - np.array([4.0, 3.2, 3.36]))) <= 1e-10

    J0, flows = objective_value(system, objective, theta0)
    assert abs(J0 - 4.70) <= 5e-3

    reward_slope = objective.weights * objective.rewards_dphi(theta0, flows)
    assert np.max(np.abs(reward_slope - np.array([1.50, 1.5432, 0.5283]))) <= 1e-3

    report = compute_gradient(system, objective, theta0, GradientConfig())
    assert np.max(np.abs(report.adjoint - np.array([3.18, 1.97, 0.53]))) <= 1e-2
    assert np.max(np.abs(report.gradient - np.array([5.7502, 1.6906]))) <= 1e-3

    theta1 = bundle.feasible.project(theta0 - 0.01 * report.gradient)
    assert np.max(np.abs(theta1 - np.array([0.7425, 0.7831]))) <= 1e-3
    J1, _ = objective_value(system, objective, theta1)
    assert abs(J1 - 4.38) <= 1e-2

    assert time.perf_counter() - start < 1.0


def test_criterion_2_scenario_optima():
    scenarios = [
        ((6.0, 5.0, 7.0), (0.3313, 0.0), 2.979),
        ((6.0, 7.0, 5.0), (0.6688, 0.0), 2.979),
        ((6.0, 5.0, 5.0), (0.5013, 0.0), 3.333),
    ]
    config = OptimizeConfig(step_rule=Constant(eta=0.01))
    for mu, theta_ref, J_ref in scenarios:
        start = time.perf_counter()
        bundle = three_queue_network(mu=mu).build(theta0=np.array([0.8, 0.8]))
        trace = projected_descent(
            bundle.system, bundle.objective, bundle.theta0, bundle.feasible, config
        )
        wall = time.perf_counter() - start
        assert trace.termination != "MaxIter", (mu, trace.termination)
        assert np.max(np.abs(trace.theta_star - np.array(theta_ref))) <= 1e-2, mu
        assert abs(trace.J_star - J_ref) <= 5e-3, mu
        assert wall < 1.0, (mu, wall)


def test_criterion_3_energy_network_golden_trace():
    start = time.perf_counter()
    network = five_queue_energy_network()
    bundle = network.build()
    system, objective, theta0 = bundle.system, bundle.objective, bundle.theta0
    failures: list[str] = []

    def check(label, got, want, tol):
        got = np.atleast_1d(np.asarray(got, dtype=float))
        want = np.atleast_1d(np.asarray(want, dtype=float))
        dev = float(np.max(np.abs(got - want)))
        if dev > tol:
            failures.append(f"{label}: max deviation {dev:.4g} > {tol:g} (got {got})")

    flows = solve_flows(system, theta0).flows
    check("flows", flows, [2.64, 2.58, 3.19, 1.27, 3.48], 1e-2)

    J0, _ = objective_value(system, objective, theta0)
    beta0 = network.beta(theta0)
    delay = float(np.sum(flows / (network.mu * beta0 - flows)))
    energy = float(np.sum(network.gamma * beta0))
    check("J(theta0)", J0, 14.90, 5e-2)
    check("delay term", delay, 11.49, 5e-2)
    check("energy term", energy, 3.41, 5e-2)

    report = compute_gradient(system, objective, theta0, GradientConfig())
    check("gradient", report.gradient, [-0.57, -0.52, -2.62, 0.04, -5.98], 1e-2)

    theta1 = bundle.feasible.project(theta0 - 0.05 * report.gradient)
    check("theta after one step", theta1, [4.931, 4.928, 5.032, 4.900, 5.206], 5e-3)
    J1, _ = objective_value(system, objective, theta1)
    check("J after one step", J1, 13.89, 1e-2)

    trace = projected_descent(
        system, objective, theta0, bundle.feasible,
        OptimizeConfig(step_rule=Constant(eta=0.05)),
    )
    check("J_star", trace.J_star, 11.09, 5e-2)
    check("budget saturation", float(np.sum(trace.theta_star)), 25.0, 1e-6)
    check("theta_star", trace.theta_star, [4.88, 4.80, 5.98, 2.91, 6.44], 1e-1)

    wall = time.perf_counter() - start
    if wall >= 5.0:
        failures.append(f"runtime {wall:.2f}s >= 5s")

    assert not failures, "; ".join(failures)


def _sized_dag(recipe_seed: int, low_d: int):
    rng = np.random.default_rng(recipe_seed)
    d = int(rng.integers(low_d, 31))
    p = int(rng.integers(1, min(10, d - 2) + 1))
    return random_forward_dag(d, p, seed=recipe_seed % 1000)


def test_criterion_4_engine_agreement():
    start = time.perf_counter()
    worst_rel = 0.0
    for s in range(100):
        network = _sized_dag(5000 + s, low_d=5)
        bundle = network.build()
        theta = bundle.theta0
        p = network.param_dim

        analytic = compute_gradient(
            bundle.system, bundle.objective, theta, GradientConfig(engine="analytic")
        )
        numeric = compute_gradient(
            bundle.system, bundle.objective, theta,
            GradientConfig(engine="numeric_jacobian"),
        )
        fd = compute_gradient(
            bundle.system, bundle.objective, theta,
            GradientConfig(engine="finite_difference", feasible=bundle.feasible),
        )

        assert analytic.fp_solves == 1 and analytic.g_evals == 0
        assert numeric.fp_solves == 1 and numeric.g_evals >= 2
        assert fd.fp_solves == 2 * p + 1 and fd.g_evals == 0

        scale = np.linalg.norm(analytic.gradient)
        assert scale > 0.0
        for other in (numeric.gradient, fd.gradient):
            rel = np.linalg.norm(other - analytic.gradient) / scale
            worst_rel = max(worst_rel, rel)
            assert rel <= 1e-4, (s, rel)

    wall = time.perf_counter() - start
    assert wall < 30.0, wall
    assert worst_rel <= 1e-4


def test_criterion_5_descent_invariants():
    config = OptimizeConfig(step_rule=Armijo())
    clean_stops = 0
    for s in range(20):
        network = _sized_dag(9000 + s, low_d=6)
        bundle = network.build()
        trace = projected_descent(
            bundle.system, bundle.objective, bundle.theta0, bundle.feasible, config
        )
        assert np.all(np.diff(trace.objective_values) <= 0.0), s
        for theta in trace.thetas:
            assert bundle.feasible.contains(theta), s
        if trace.termination in ("RelativeJ", "GradNorm"):
            clean_stops += 1
    assert clean_stops >= 18, clean_stops


def test_criterion_6_acyclic_scaling():
    def per_iteration_seconds(d, p):
        bundle = random_forward_dag(d, p, seed=0).build()
        probe = OptimizeConfig(
            step_rule=Constant(eta=0.05), eps_J=0.0, eps_grad=0.0, max_iter=3
        )
        best = np.inf
        for _ in range(2):
            start = time.perf_counter()
            trace = projected_descent(
                bundle.system, bundle.objective, bundle.theta0, bundle.feasible, probe
            )
            wall = time.perf_counter() - start
            best = min(best, wall / max(1, trace.iterations))
        return best

    small = per_iteration_seconds(10_000, 5_000)
    large = per_iteration_seconds(100_000, 50_000)
    assert large / small <= 15.0, (small, large, large / small)

    bundle = random_forward_dag(100_000, 50_000, seed=0).build()
    trace = projected_descent(
        bundle.system, bundle.objective, bundle.theta0, bundle.feasible,
        OptimizeConfig(step_rule=Constant(eta=0.05)),
    )
    assert trace.termination in ("RelativeJ", "GradNorm", "MaxIter")
    assert np.isfinite(trace.J_star)
    assert bundle.feasible.contains(trace.theta_star)


def test_criterion_7_simulation_concordance():
    start = time.perf_counter()
    network = three_queue_network()
    theta0 = np.array([0.8, 0.8])
    lam_ext, mu, routing = network.simulation_inputs(theta0)
    report = simulate_network(
        lam_ext, mu, routing,
        SimConfig(horizon=2e4, warmup=2e3, replications=10, seed=0),
    )

    totals = report.rep_queue_lengths.sum(axis=1)
    J_hat = float(totals.mean())
    se_J = float(totals.std(ddof=1) / np.sqrt(totals.shape[0]))
    assert abs(J_hat - 4.70) <= 3.0 * se_J, (J_hat, se_J)

    flows = np.array([4.0, 3.2, 3.36])
    band = 3.0 * np.maximum(report.se_throughput, 1e-12)
    assert np.all(np.abs(report.throughput - flows) <= band), (
        report.throughput, report.se_throughput,
    )
    assert time.perf_counter() - start < 60.0


def test_criterion_8_conservation_identities():
    bundle = three_queue_network().build()
    grid = np.linspace(0.0, 1.0, 50)
    worst = 0.0
    for p in grid:
        for q in grid:
            flows = solve_flows(bundle.system, np.array([p, q])).flows
            worst = max(worst, abs(flows[1] + flows[2] - (4.0 + 4.0 * p * q)))
    assert worst <= 1e-10, worst

    epn = five_queue_energy_network().build()
    base = solve_flows(epn.system, epn.theta0).flows
    rng = np.random.default_rng(42)
    for _ in range(5):
        theta = epn.feasible.project(rng.uniform(3.0, 7.0, size=5))
        again = solve_flows(epn.system, theta).flows
        assert np.array_equal(base, again)

    for rho in (0.1, 0.5, 2.0 / 3.0, 0.9, 0.99):
        levels = 4000
        total = float(np.sum(geometric_pmf(rho, levels))) + rho**levels
        assert abs(total - 1.0) <= 1e-12, rho
