import json

import numpy as np
import pandas as pd
import pytest

from conftest import make_profile
from voltgrid.analysis import summarize, voltage_envelope
from voltgrid.analysis.oracle import audit_policy, oracle_costs
from voltgrid.drl.actions import action_from_index
from voltgrid.exceptions import SlotSolveError, TraceError
from voltgrid.sim import (
    RunConfig,
    TwoTimescaleSimulator,
    check_cost_accounting,
    check_timescale_separation,
    compare_policies,
    interval_cost,
    mdp_transition,
    read_traces,
    run_episode,
    write_traces,
)


def small_config(policy="drlcap", **overrides):
    settings = dict(policy=policy, n_intervals=5, slots_per_interval=2, R=4, M=2, B=2, hidden=(6,), seed=3)
    settings.update(overrides)
    return RunConfig(**settings)


@pytest.fixture
def long_profile(toy_feeder):
    """Sixteen intervals of two slots with a slowly varying load."""
    n = toy_feeder.n_buses
    shape = (16, 2, n)
    load_buses = np.setdiff1d(np.arange(1, n + 1), toy_feeder.cap_buses)
    level = 0.02 + 0.01 * np.sin(np.arange(32) / 5.0).reshape(16, 2)
    p_c = np.zeros(shape)
    p_c[:, :, load_buses - 1] = level[:, :, None]
    return make_profile(p_c, 0.75 * p_c, np.zeros(shape))


def test_two_bus_interval_cost(two_bus):
    profile = make_profile(np.full((1, 1, 1), 0.1), np.full((1, 1, 1), 0.05), np.zeros((1, 1, 1)))
    result = interval_cost(two_bus, profile, 1, np.zeros(0, dtype=int))
    assert result.cost == pytest.approx(4e-6)
    np.testing.assert_allclose(result.voltages, [[0.998]])
    np.testing.assert_allclose(result.setpoints, [[0.05]])


def test_interval_cost_tags_failing_slot(toy_feeder, toy_profile):
    with pytest.raises(SlotSolveError) as info:
        interval_cost(toy_feeder, toy_profile, 2, np.array([1, 0]))
    assert info.value.slot == (2, 1)


def test_mdp_transition_averages_slots():
    p_g = np.array([[[0.1], [0.3]]])
    profile = make_profile(np.zeros((1, 2, 1)), np.zeros((1, 2, 1)), p_g)
    np.testing.assert_allclose(mdp_transition(profile, 1, [1, 0]), [0.2, 1.0, 0.0])


def test_profile_must_cover_bootstrap_interval(toy_feeder, toy_profile):
    with pytest.raises(ValueError, match="bootstrap"):
        TwoTimescaleSimulator(toy_feeder, toy_profile, small_config(n_intervals=6))


def test_realtime_requires_linear_physics(toy_feeder, toy_profile):
    with pytest.raises(ValueError):
        TwoTimescaleSimulator(toy_feeder, toy_profile, small_config("realtime", physics="socp"))


def test_fixcap_holds_its_pattern(toy_feeder, toy_profile):
    trace = run_episode(toy_feeder, toy_profile, small_config("fixcap", fixcap_pattern=(1, 0, 1)))
    assert trace.label == "fixcap[101]"
    assert trace.actions == [5] * 5
    assert check_timescale_separation(trace)
    assert np.isnan(trace.epsilons).all()


def test_randcap_is_reproducible(toy_feeder, toy_profile):
    first = run_episode(toy_feeder, toy_profile, small_config("randcap"))
    second = run_episode(toy_feeder, toy_profile, small_config("randcap"))
    assert first.actions == second.actions
    assert first.costs == second.costs
    assert check_timescale_separation(first)


def test_realtime_commits_per_slot(toy_feeder, toy_profile):
    trace = run_episode(toy_feeder, toy_profile, small_config("realtime"))
    assert len(trace.commitments) == 5
    assert trace.commitments[0].shape == (2, 3)
    assert check_timescale_separation(trace)
    assert trace.agent is None


def test_drlcap_bookkeeping(toy_feeder, long_profile):
    trace = run_episode(toy_feeder, long_profile, small_config(n_intervals=15, B=5))
    assert trace.taus == list(range(1, 16))
    assert trace.sync_log == [5, 10, 15]
    assert max(trace.buffer_sizes) <= 4
    assert trace.losses[0] is None
    assert trace.losses[-1] is not None
    assert trace.epsilons == [1.0] * 15
    assert check_timescale_separation(trace)
    np.testing.assert_allclose(trace.time_avg_cost()[-1], np.mean(trace.costs))


def test_cost_accounting_survives_csv(tmp_path, toy_feeder, toy_profile):
    trace = run_episode(toy_feeder, toy_profile, small_config())
    assert check_cost_accounting(trace.cost_frame(), trace.voltage_frame(), toy_feeder.v0)
    write_traces(trace, str(tmp_path))
    traces = read_traces(str(tmp_path))
    assert len(traces["costs"]) == 5
    assert len(traces["voltages"]) == 5 * 2 * toy_feeder.n_buses
    assert len(traces["setpoints"]) == 5 * 2 * 3
    assert check_cost_accounting(traces["costs"], traces["voltages"], toy_feeder.v0)


def test_cost_accounting_detects_tampering(toy_feeder, toy_profile):
    trace = run_episode(toy_feeder, toy_profile, small_config("fixcap"))
    costs = trace.cost_frame()
    costs.loc[2, "cost"] += 1e-3
    assert not check_cost_accounting(costs, trace.voltage_frame(), toy_feeder.v0)


def test_resume_continues_the_same_episode(toy_feeder, toy_profile):
    full = run_episode(toy_feeder, toy_profile, small_config())
    head = run_episode(toy_feeder, toy_profile, small_config(n_intervals=3))
    tail = run_episode(toy_feeder, toy_profile, small_config(n_intervals=2), agent=head.agent, start_tau=4)
    assert tail.taus == [4, 5]
    assert head.actions + tail.actions == full.actions
    assert head.costs + tail.costs == full.costs
    np.testing.assert_allclose(tail.time_avg_cost(), full.time_avg_cost()[3:], rtol=1e-12)
    assert tail.agent.cost_sum == pytest.approx(sum(full.costs), rel=1e-12)
    assert check_cost_accounting(tail.cost_frame(), tail.voltage_frame(), toy_feeder.v0)


def test_resumed_baseline_takes_prior_cost_sum(toy_feeder, toy_profile):
    full = run_episode(toy_feeder, toy_profile, small_config("fixcap"))
    tail = run_episode(toy_feeder, toy_profile, small_config("fixcap", n_intervals=2), start_tau=4,
                       prior_cost_sum=sum(full.costs[:3]))
    np.testing.assert_allclose(tail.time_avg_cost(), full.time_avg_cost()[3:], rtol=1e-12)


def test_cost_accounting_rejects_shifted_time_average(toy_feeder, toy_profile):
    trace = run_episode(toy_feeder, toy_profile, small_config("fixcap"))
    costs = trace.cost_frame()
    costs.loc[3, "time_avg_cost"] *= 1.5
    assert not check_cost_accounting(costs, trace.voltage_frame(), toy_feeder.v0)


def test_decisions_ignore_future_profile_intervals(toy_feeder, toy_profile):
    """Rewriting profile intervals 4..6 leaves actions 1..3 and costs 1..2 untouched."""
    altered = [array.copy() for array in (toy_profile.p_c, toy_profile.q_c, toy_profile.p_g)]
    for array in altered[:2]:
        array[3:] *= 1.7
    future = make_profile(*altered)
    config = small_config(epsilon_override=0.0, M=1, R=2)
    base = run_episode(toy_feeder, toy_profile, config)
    changed = run_episode(toy_feeder, future, config)
    assert base.actions[:3] == changed.actions[:3]
    assert base.costs[:2] == changed.costs[:2]
    np.testing.assert_array_equal(np.array(base.voltages[:2]), np.array(changed.voltages[:2]))
    assert base.costs[2:] != changed.costs[2:]


def test_socp_physics_episode(toy_feeder, toy_profile):
    linear = run_episode(toy_feeder, toy_profile, small_config("fixcap", n_intervals=1))
    relaxed = run_episode(toy_feeder, toy_profile, small_config("fixcap", n_intervals=1, physics="socp"))
    assert relaxed.costs[0] == pytest.approx(linear.costs[0], rel=0.2)


def test_socp_iteration_cap_is_a_slot_failure(toy_feeder, toy_profile):
    with pytest.raises(SlotSolveError) as info:
        interval_cost(toy_feeder, toy_profile, 2, np.zeros(3, dtype=int), physics="socp", max_iter=1)
    assert info.value.slot == (2, 1)
    assert "max-iter" in str(info.value)


def test_box_qp_iteration_cap_is_recorded(toy_feeder, toy_profile):
    converged = run_episode(toy_feeder, toy_profile, small_config("fixcap", n_intervals=2))
    assert converged.solver_statuses == [["optimal", "optimal"]] * 2
    capped = run_episode(toy_feeder, toy_profile, small_config("fixcap", n_intervals=2, solver_max_iter=1))
    assert len(capped.solver_statuses) == 2
    assert "max-iter" in sum(capped.solver_statuses, [])
    for setpoints in capped.setpoints:
        assert np.all(np.abs(setpoints) <= toy_feeder.q_max.max() + 1e-12)


def test_solver_iteration_cap_must_be_positive(toy_feeder, toy_profile):
    with pytest.raises(ValueError):
        TwoTimescaleSimulator(toy_feeder, toy_profile, small_config(solver_max_iter=0))


def test_compare_against_itself(toy_feeder, toy_profile):
    report = compare_policies(toy_feeder, toy_profile, [small_config(), small_config()], max_workers=2)
    assert list(report.curves.columns) == ["drlcap", "drlcap#2"]
    assert len(report.curves) == 5
    np.testing.assert_array_equal(report.curves["drlcap"], report.curves["drlcap#2"])
    assert len(report.costs) == 10
    assert len(report.envelopes) == 2 * toy_feeder.n_buses


def test_compare_orders_policies(toy_feeder, toy_profile):
    configs = [small_config("fixcap"), small_config("fixcap", fixcap_pattern=(1, 1, 1)), small_config("realtime")]
    report = compare_policies(toy_feeder, toy_profile, configs)
    assert sorted(report.ordering) == sorted(["fixcap", "fixcap[111]", "realtime"])
    finals = report.curves.iloc[-1]
    assert [finals[label] for label in report.ordering] == sorted(finals)


def test_capacitors_worsen_over_voltage(toy_feeder):
    n = toy_feeder.n_buses
    p_g = np.zeros((2, 2, n))
    p_g[:, :, toy_feeder.inv_buses - 1] = toy_feeder.inv_p_cap
    profile = make_profile(np.zeros((2, 2, n)), np.zeros((2, 2, n)), p_g)
    configs = [
        small_config("fixcap", n_intervals=1, fixcap_pattern=(1, 1, 1)),
        small_config("fixcap", n_intervals=1, fixcap_pattern=(0, 0, 0)),
    ]
    report = compare_policies(toy_feeder, profile, configs)
    assert report.ordering == ["fixcap[000]", "fixcap[111]"]
    finals = report.curves.iloc[-1]
    assert finals["fixcap[111]"] > finals["fixcap[000]"]


def test_voltage_envelope():
    voltages = pd.DataFrame({
        "tau": [1, 1, 2, 2],
        "t": [1, 1, 1, 1],
        "bus": [1, 2, 1, 2],
        "v_pu": [1.21, 0.81, 1.0, 0.9025],
        "policy": "fixcap",
    })
    envelope = voltage_envelope(voltages)
    np.testing.assert_allclose(envelope["max_excursion"], [0.1, 0.1])
    np.testing.assert_allclose(envelope["v_min"], [1.0, 0.81])
    last = voltage_envelope(voltages, n_slots=1)
    np.testing.assert_allclose(last["max_excursion"], [0.0, 0.05])


def test_summarize_compare_directory(tmp_path, toy_feeder, toy_profile):
    for config in (small_config("fixcap"), small_config("randcap")):
        write_traces(run_episode(toy_feeder, toy_profile, config), str(tmp_path / config.label))
    summary = summarize(str(tmp_path), n_slots=4)
    assert set(summary["policies"]) == {"fixcap", "randcap"}
    assert summary["envelope_slots"] == 4
    block = summary["policies"]["fixcap"]
    assert block["n_intervals"] == 5
    assert len(block["time_avg_curve"]) == 5
    assert len(block["voltage_envelope"]["bus"]) == toy_feeder.n_buses
    with open(tmp_path / "summary.json") as f:
        assert json.load(f)["ordering"] == summary["ordering"]


def test_oracle_bounds_fixed_policies(toy_feeder, toy_profile):
    oracle = oracle_costs(toy_feeder, toy_profile, n_intervals=3)
    assert list(oracle["tau"]) == [1, 2, 3]
    assert np.all(oracle["best_cost"] <= oracle["all_off_cost"])
    assert np.all(oracle["all_off_cost"] <= oracle["worst_cost"])
    trace = run_episode(toy_feeder, toy_profile, small_config("fixcap", n_intervals=3))
    audited = audit_policy(trace.cost_frame(), oracle)
    assert np.all(audited["regret"] >= -1e-15)
    np.testing.assert_allclose(audited["regret"], oracle["all_off_cost"] - oracle["best_cost"], atol=1e-15)


def test_oracle_best_action_reproduces_cost(toy_feeder, toy_profile):
    oracle = oracle_costs(toy_feeder, toy_profile, n_intervals=1)
    best = action_from_index(int(oracle["best_action_index"][0]), toy_feeder.n_caps)
    result = interval_cost(toy_feeder, toy_profile, 2, best.as_array())
    assert result.cost == oracle["best_cost"][0]


def test_trace_directory_must_exist(tmp_path):
    with pytest.raises(TraceError):
        read_traces(str(tmp_path / "missing"))
    with pytest.raises(TraceError):
        read_traces(str(tmp_path))
