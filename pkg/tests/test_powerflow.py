import numpy as np
import pytest

from voltgrid.exceptions import ConvergenceError, InfeasibleOperatingPointError
from voltgrid.feeder.bundled import bundled_feeder
from voltgrid.feeder.profiles import default_chain_spec, synth_markov_profile
from voltgrid.powerflow import (
    FlowState,
    branch_flow_residuals,
    build_sensitivity,
    certify_soc_exactness,
    dense_lindistflow,
    lindistflow_residuals,
    solve_branch_flow_exact,
    solve_lindistflow,
)


def test_two_bus_lindistflow(two_bus):
    state = solve_lindistflow(two_bus, np.array([-0.1]), np.array([-0.05]))
    np.testing.assert_allclose(state.P, [0.1])
    np.testing.assert_allclose(state.Q, [0.05])
    np.testing.assert_allclose(state.v, [0.996])
    np.testing.assert_array_equal(state.ell, [0.0])


def test_injection_length_is_checked(two_bus):
    with pytest.raises(ValueError):
        solve_lindistflow(two_bus, np.zeros(2), np.zeros(1))


@pytest.mark.parametrize("seed", range(50))
def test_recursion_matches_dense_solve(random_tree, seed):
    model = random_tree(2 + seed % 49, seed)
    rng = np.random.default_rng(100 + seed)
    p = rng.normal(0.0, 0.02, model.n_buses)
    q = rng.normal(0.0, 0.02, model.n_buses)
    fast = solve_lindistflow(model, p, q)
    dense = dense_lindistflow(model, p, q)
    np.testing.assert_allclose(fast.v, dense.v, atol=1e-10)
    np.testing.assert_allclose(fast.P, dense.P, atol=1e-10)
    np.testing.assert_allclose(fast.Q, dense.Q, atol=1e-10)
    assert lindistflow_residuals(model, p, q, fast) < 1e-12


def test_zero_injection_gives_flat_voltage(toy_feeder):
    n = toy_feeder.n_buses
    state = solve_lindistflow(toy_feeder, np.zeros(n), np.zeros(n))
    np.testing.assert_array_equal(state.v, np.full(n, toy_feeder.v0))
    assert state.deviation() == 0.0


def test_sensitivity_two_bus(two_bus):
    sens = build_sensitivity(two_bus)
    np.testing.assert_allclose(sens.R_mat, [[0.02]])
    np.testing.assert_allclose(sens.X_mat, [[0.04]])


def test_sensitivity_chain(chain3):
    sens = build_sensitivity(chain3)
    np.testing.assert_allclose(sens.R_mat, [[0.02, 0.02], [0.02, 0.04]])
    np.testing.assert_allclose(sens.X_mat, [[0.04, 0.04], [0.04, 0.08]])
    assert build_sensitivity(chain3) is sens


def test_sensitivity_is_symmetric_and_matches_recursion(random_tree):
    model = random_tree(30, 7)
    sens = build_sensitivity(model)
    np.testing.assert_allclose(sens.R_mat, sens.R_mat.T)
    np.testing.assert_allclose(sens.X_mat, sens.X_mat.T)
    rng = np.random.default_rng(8)
    p = rng.normal(0.0, 0.01, model.n_buses)
    q = rng.normal(0.0, 0.01, model.n_buses)
    np.testing.assert_allclose(sens.voltages(p, q), solve_lindistflow(model, p, q).v, atol=1e-12)


@pytest.mark.parametrize("name", ["sce47", "ieee123"])
def test_sensitivities_are_nonnegative(random_tree, name):
    for model in (bundled_feeder(name), random_tree(40, 3)):
        sens = build_sensitivity(model)
        assert np.all(sens.X_mat >= 0)
        assert np.all(sens.R_mat >= 0)


def test_superposition(toy_feeder):
    rng = np.random.default_rng(5)
    n = toy_feeder.n_buses
    p1, q1, p2, q2 = (rng.normal(0.0, 0.01, n) for _ in range(4))
    v0 = toy_feeder.v0
    both = solve_lindistflow(toy_feeder, p1 + p2, q1 + q2).v - v0
    first = solve_lindistflow(toy_feeder, p1, q1).v - v0
    second = solve_lindistflow(toy_feeder, p2, q2).v - v0
    np.testing.assert_allclose(both, first + second, atol=1e-12)


def test_exact_sweep_zero_injection(toy_feeder):
    n = toy_feeder.n_buses
    state = solve_branch_flow_exact(toy_feeder, np.zeros(n), np.zeros(n))
    np.testing.assert_allclose(state.v, np.full(n, toy_feeder.v0))
    np.testing.assert_allclose(state.ell, np.zeros(n))
    assert state.iterations == 1


def test_exact_sweep_satisfies_branch_flow(toy_feeder, toy_profile):
    p_c, q_c, p_g = toy_profile.slot(1, 1)
    state = solve_branch_flow_exact(toy_feeder, p_g - p_c, -q_c)
    assert branch_flow_residuals(toy_feeder, p_g - p_c, -q_c, state) < 1e-8
    assert np.all(state.ell >= 0)


@pytest.mark.parametrize("seed", range(10))
def test_exact_sweep_residuals_on_random_points(random_tree, seed):
    model = random_tree(10 + 3 * seed, 200 + seed, with_devices=False)
    rng = np.random.default_rng(seed)
    p = rng.uniform(-0.03, 0.01, model.n_buses)
    q = rng.uniform(-0.02, 0.01, model.n_buses)
    state = solve_branch_flow_exact(model, p, q)
    assert branch_flow_residuals(model, p, q, state) < 1e-8
    assert np.all(state.ell >= 0)
    assert certify_soc_exactness(model, state).exact


@pytest.mark.parametrize("name", ["sce47", "ieee123"])
def test_exact_and_linear_voltages_agree_on_default_profile(name):
    model = bundled_feeder(name)
    profile = synth_markov_profile(model, 0, default_chain_spec(model, 20, 2))
    for tau in (1, 5, 10, 15, 20):
        p_c, q_c, p_g = profile.slot(tau, 1)
        assert np.max(p_c) <= 0.05 and np.max(q_c) <= 0.05
        p, q = p_g - p_c, -q_c
        exact = solve_branch_flow_exact(model, p, q)
        linear = solve_lindistflow(model, p, q)
        assert np.max(np.abs(exact.v - linear.v)) <= 1e-3


def test_losses_shrink_quadratically(two_bus):
    """Gap between exact and linear voltages scales with the square of the load."""
    gaps = []
    for scale in (0.01, 0.02):
        p = np.array([-scale])
        q = np.array([-scale / 2])
        exact = solve_branch_flow_exact(two_bus, p, q, tol=1e-14)
        linear = solve_lindistflow(two_bus, p, q)
        gaps.append(abs(exact.v[0] - linear.v[0]))
    assert gaps[1] / gaps[0] == pytest.approx(4.0, rel=0.05)


def test_exact_sweep_reports_collapse(two_bus):
    with pytest.raises((InfeasibleOperatingPointError, ConvergenceError)):
        solve_branch_flow_exact(two_bus, np.array([-30.0]), np.array([-30.0]))


def test_exact_sweep_iteration_cap(toy_feeder, toy_profile):
    p_c, q_c, p_g = toy_profile.slot(1, 1)
    with pytest.raises(ConvergenceError):
        solve_branch_flow_exact(toy_feeder, p_g - p_c, -q_c, tol=0.0, max_iter=2)


def test_exactness_of_sweep_solution(toy_feeder, toy_profile):
    p_c, q_c, p_g = toy_profile.slot(1, 1)
    state = solve_branch_flow_exact(toy_feeder, p_g - p_c, -q_c)
    report = certify_soc_exactness(toy_feeder, state)
    assert report.exact
    assert report.feasible


def test_exactness_detects_inflated_current(two_bus):
    state = solve_branch_flow_exact(two_bus, np.array([-0.1]), np.array([-0.05]))
    inflated = FlowState(v=state.v, P=state.P, Q=state.Q, ell=state.ell + 0.01, v0=state.v0)
    report = certify_soc_exactness(two_bus, inflated)
    assert not report.exact
    assert report.feasible
    assert report.max_gap == pytest.approx(0.01)
    assert report.worst_line == 1
