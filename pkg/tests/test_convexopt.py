import itertools

import numpy as np
import pytest

from conftest import feeder_dict
from voltgrid.convexopt import (
    SlotData,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    STATUS_STALLED,
    QpProblem,
    active_inverters,
    assemble_qp,
    capacitor_injection,
    enumerate_capacitor_actions,
    evaluate_setpoints,
    kkt_residual,
    project_rotated_cones,
    qp_from_affine_map,
    round_commitment,
    solve_box_qp,
    solve_realtime_relaxed,
    solve_socp,
)
from voltgrid.feeder.feeder_model import feeder_from_dict
from voltgrid.powerflow import build_sensitivity, certify_soc_exactness


def heavy_slot(n_buses, p=0.1, q=0.05):
    return SlotData(p_c=np.full(n_buses, p), q_c=np.full(n_buses, q), p_g=np.zeros(n_buses))


def test_two_bus_qp_saturates(two_bus):
    sens = build_sensitivity(two_bus)
    problem = assemble_qp(two_bus, sens, heavy_slot(1), np.zeros(0, dtype=int))
    z, report = solve_box_qp(problem)
    np.testing.assert_allclose(z, [0.05])
    np.testing.assert_allclose(problem.voltages(z), [0.998])
    assert report.objective == pytest.approx(4e-6)
    assert report.status == STATUS_OPTIMAL


def test_zero_gradient_keeps_origin(toy_feeder):
    sens = build_sensitivity(toy_feeder)
    problem = assemble_qp(toy_feeder, sens, SlotData.zeros(toy_feeder.n_buses), np.zeros(3, dtype=int))
    z, report = solve_box_qp(problem)
    np.testing.assert_array_equal(z, np.zeros(problem.size))
    assert report.iterations == 0
    assert report.objective == 0.0


def test_qp_matches_lattice_search():
    model = feeder_from_dict(feeder_dict(
        [(0, 1, 0.01, 0.03), (1, 2, 0.02, 0.04), (1, 3, 0.015, 0.05)],
        inverters=[(2, 0.0, 0.04), (3, 0.0, 0.03)],
    ))
    sens = build_sensitivity(model)
    slot = SlotData(p_c=np.array([0.0, 0.3, 0.2]), q_c=np.array([0.0, 0.1, 0.2]), p_g=np.zeros(3))
    problem = assemble_qp(model, sens, slot, np.zeros(0, dtype=int))
    z, report = solve_box_qp(problem)

    grid = [np.linspace(lo, hi, 201) for lo, hi in zip(problem.lo, problem.hi)]
    best = min(problem.objective(np.array(point)) for point in itertools.product(*grid))
    assert report.objective <= best + 1e-12
    assert kkt_residual(problem, z) <= 1e-8


def lattice_minimum(problem, points):
    grid = np.array(list(itertools.product(*[np.linspace(lo, hi, points) for lo, hi in zip(problem.lo, problem.hi)])))
    values = 0.5 * np.sum((grid @ problem.H) * grid, axis=1) + grid @ problem.g + problem.const
    return float(values.min())


def random_small_qp(seed):
    """Three or four buses, two or three inverters, random loads."""
    rng = np.random.default_rng(seed)
    n_buses = int(rng.integers(3, 5))
    lines = [
        (int(rng.integers(0, bus)), bus, float(rng.uniform(0.005, 0.03)), float(rng.uniform(0.01, 0.06)))
        for bus in range(1, n_buses + 1)
    ]
    inverter_buses = rng.choice(np.arange(1, n_buses + 1), size=int(rng.integers(2, 4)), replace=False)
    inverters = [(int(bus), 0.0, float(rng.uniform(0.01, 0.06))) for bus in sorted(inverter_buses)]
    model = feeder_from_dict(feeder_dict(lines, inverters=inverters))
    slot = SlotData(
        p_c=rng.uniform(0.0, 0.3, n_buses), q_c=rng.uniform(-0.05, 0.2, n_buses), p_g=np.zeros(n_buses)
    )
    return assemble_qp(model, build_sensitivity(model), slot, np.zeros(0, dtype=int))


@pytest.mark.parametrize("seed", range(20))
def test_qp_beats_lattice_on_random_instances(seed):
    problem = random_small_qp(seed)
    z, report = solve_box_qp(problem)
    assert report.status == STATUS_OPTIMAL
    assert kkt_residual(problem, z) <= 1e-8
    assert report.objective <= lattice_minimum(problem, 201 if problem.size == 2 else 41) + 1e-12


def test_qp_five_inverters_is_stationary(random_tree):
    model = random_tree(5, seed=17)
    rng = np.random.default_rng(17)
    slot = SlotData(p_c=rng.uniform(0.05, 0.2, 5), q_c=rng.uniform(0.0, 0.1, 5), p_g=np.zeros(5))
    problem = assemble_qp(model, build_sensitivity(model), slot, np.zeros(0, dtype=int))
    assert problem.size == 5
    z, report = solve_box_qp(problem)
    assert report.status == STATUS_OPTIMAL
    assert kkt_residual(problem, z) <= 1e-8
    samples = rng.uniform(problem.lo, problem.hi, size=(2000, 5))
    assert all(report.objective <= problem.objective(sample) + 1e-12 for sample in samples)
    assert report.objective <= lattice_minimum(problem, 9) + 1e-12


class DriftingProblem(QpProblem):
    """Objective that grows by a fixed amount at every evaluation."""
    drift = 1.0

    def objective(self, z):
        self.calls = getattr(self, "calls", 0) + 1
        return super().objective(z) + self.drift * self.calls


def test_qp_reports_stall_apart_from_iteration_cap(toy_feeder, toy_profile):
    sens = build_sensitivity(toy_feeder)
    base = assemble_qp(toy_feeder, sens, SlotData.from_profile(toy_profile, 1, 1), np.zeros(3, dtype=int))
    problem = DriftingProblem(**vars(base))
    z, report = solve_box_qp(problem, max_iter=50)
    assert report.status == STATUS_STALLED
    assert report.iterations == 1
    np.testing.assert_array_equal(z, np.zeros(problem.size))
    assert not report.optimal


def test_qp_history_is_monotone_and_feasible(toy_feeder, toy_profile):
    sens = build_sensitivity(toy_feeder)
    slot = SlotData.from_profile(toy_profile, 1, 1)
    for y in ([0, 0, 0], [1, 1, 1], [1, 0, 1]):
        problem = assemble_qp(toy_feeder, sens, slot, np.array(y))
        z, report = solve_box_qp(problem)
        history = np.array(report.objective_history)
        assert np.all(np.diff(history) <= 1e-15)
        assert np.all(z >= problem.lo) and np.all(z <= problem.hi)
        _, deviation = evaluate_setpoints(toy_feeder, slot, np.array(y), z)
        assert report.objective == pytest.approx(deviation, rel=1e-9, abs=1e-15)


def test_qp_max_iter_returns_box_feasible_iterate(toy_feeder, toy_profile):
    sens = build_sensitivity(toy_feeder)
    problem = assemble_qp(toy_feeder, sens, SlotData.from_profile(toy_profile, 1, 1), np.zeros(3, dtype=int))
    z, report = solve_box_qp(problem, tol=0.0, max_iter=3)
    assert report.iterations <= 3
    assert report.status == STATUS_MAX_ITER
    assert np.all(z >= problem.lo) and np.all(z <= problem.hi)


def test_box_bounds_must_straddle_zero():
    with pytest.raises(ValueError):
        qp_from_affine_map(np.ones(1), np.ones((1, 1)), 1.0, np.array([0.1]), np.array([0.2]))


def test_capacitor_injection_is_checked(toy_feeder):
    np.testing.assert_allclose(
        capacitor_injection(toy_feeder, np.array([1, 0, 1]))[toy_feeder.cap_buses - 1], [0.06, 0.0, 0.04]
    )
    with pytest.raises(ValueError):
        capacitor_injection(toy_feeder, np.array([1, 0]))
    with pytest.raises(ValueError):
        capacitor_injection(toy_feeder, np.array([1, 0, 0.5]))


def test_active_inverters_skip_zero_bounds(toy_feeder):
    buses, q_max = active_inverters(toy_feeder)
    assert list(buses) == [4, 8, 10]
    assert np.all(q_max > 0)


def test_rotated_cone_projection():
    inside = np.array([[1.0, 1.0, 0.5, 0.5]])
    np.testing.assert_allclose(project_rotated_cones(inside), inside)
    polar = np.array([[-1.0, -1.0, 0.0, 0.0]])
    np.testing.assert_allclose(project_rotated_cones(polar), np.zeros((1, 4)))
    outside = np.array([[1.0, 0.0, 1.0, 0.0], [0.2, 0.1, -3.0, 2.0]])
    projected = project_rotated_cones(outside)
    a, b, w = projected[:, 0], projected[:, 1], projected[:, 2:]
    np.testing.assert_allclose(2 * a * b, np.sum(w ** 2, axis=1), atol=1e-12)
    assert np.all(a >= 0) and np.all(b >= 0)
    np.testing.assert_allclose(project_rotated_cones(projected), projected, atol=1e-12)


def test_socp_zero_injection(toy_feeder):
    state, q_r, report = solve_socp(toy_feeder, SlotData.zeros(toy_feeder.n_buses), np.zeros(3, dtype=int))
    assert report.status == STATUS_OPTIMAL
    assert report.objective <= 1e-9
    np.testing.assert_allclose(state.v, np.ones(toy_feeder.n_buses), atol=1e-5)


def test_socp_two_bus_close_to_linear(two_bus):
    slot = heavy_slot(1)
    y_hat = np.zeros(0, dtype=int)
    state, q_r, report = solve_socp(two_bus, slot, y_hat)
    assert report.status == STATUS_OPTIMAL
    assert report.solver == "socp-admm"
    np.testing.assert_allclose(q_r, [0.05], atol=1e-5)
    np.testing.assert_allclose(state.v, [0.998], atol=1e-4)

    _, exact_objective = evaluate_setpoints(two_bus, slot, y_hat, q_r, physics="exact")
    assert report.objective <= exact_objective + 1e-6


def test_socp_relaxation_is_exact(two_bus):
    state, _, report = solve_socp(two_bus, heavy_slot(1), np.zeros(0, dtype=int))
    assert report.optimal
    certificate = certify_soc_exactness(two_bus, state, tol=1e-5)
    assert certificate.exact


def test_socp_exact_on_ten_bus_feeder(toy_feeder, toy_profile):
    slot = SlotData.from_profile(toy_profile, 1, 1)
    y_hat = np.zeros(3, dtype=int)
    state, q_r, report = solve_socp(toy_feeder, slot, y_hat)
    assert toy_feeder.n_buses == 10
    assert report.optimal
    assert certify_soc_exactness(toy_feeder, state, tol=1e-4).exact

    z, _ = solve_box_qp(assemble_qp(toy_feeder, build_sensitivity(toy_feeder), slot, y_hat))
    _, qp_exact_objective = evaluate_setpoints(toy_feeder, slot, y_hat, z, physics="exact")
    assert report.objective <= qp_exact_objective + 1e-6


def test_round_commitment_ties_round_up():
    np.testing.assert_array_equal(round_commitment(np.array([0.5, 0.49, 1.0, 0.0])), [1, 0, 1, 0])


def test_realtime_idle_feeder(toy_feeder):
    sens = build_sensitivity(toy_feeder)
    action, q_r, report = solve_realtime_relaxed(toy_feeder, sens, SlotData.zeros(toy_feeder.n_buses))
    assert action.index == 0
    np.testing.assert_array_equal(q_r, np.zeros(3))
    assert report.objective == 0.0
    assert report.rounding_gap == 0.0
    assert report.solver == "realtime-relax-round"


def test_realtime_never_beats_enumeration(toy_feeder, toy_profile):
    sens = build_sensitivity(toy_feeder)
    slot = SlotData.from_profile(toy_profile, 2, 1)
    action, q_r, report = solve_realtime_relaxed(toy_feeder, sens, slot)
    table = enumerate_capacitor_actions(toy_feeder, sens, slot)
    assert len(table) == 8
    assert list(table["action_index"]) == list(range(8))
    assert report.objective >= table["objective"].min() - 1e-12
    assert report.rounding_gap == pytest.approx(report.objective - table["objective"].min(), abs=1e-12)
    assert np.all(np.abs(q_r) <= active_inverters(toy_feeder)[1] + 1e-12)


def test_realtime_skips_gap_on_request(toy_feeder, toy_profile):
    sens = build_sensitivity(toy_feeder)
    _, _, report = solve_realtime_relaxed(toy_feeder, sens, SlotData.from_profile(toy_profile, 1, 1), report_gap=False)
    assert report.rounding_gap is None


def test_enumeration_limit():
    n = 13
    lines = [(bus - 1, bus, 0.01, 0.01) for bus in range(1, n + 1)]
    model = feeder_from_dict(feeder_dict(lines, capacitors=[(bus, 0.01) for bus in range(1, n + 1)]))
    with pytest.raises(ValueError, match="exceeds"):
        enumerate_capacitor_actions(model, build_sensitivity(model), SlotData.zeros(n))
