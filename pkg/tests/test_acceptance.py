"""
Acceptance-scale episodes on synthesized scenarios. Slow; deselect with
-m "not slow".
"""
import numpy as np
import pytest

from voltgrid.analysis.summary import final_time_avg, voltage_envelope
from voltgrid.feeder.bundled import bundled_feeder
from voltgrid.feeder.profiles import default_chain_spec, synth_markov_profile
from voltgrid.sim import RunConfig, check_cost_accounting, compare_policies, run_episode

pytestmark = pytest.mark.slow

N_INTERVALS = 2000
SEEDS = range(5)


def baseline_configs(preset, n_caps, seed, n_intervals=N_INTERVALS):
    return [
        RunConfig.from_preset(preset, policy="drlcap", n_intervals=n_intervals, seed=seed),
        RunConfig.from_preset(preset, policy="randcap", n_intervals=n_intervals, seed=seed),
        RunConfig.from_preset(preset, policy="fixcap", n_intervals=n_intervals, seed=seed,
                              fixcap_pattern=(0,) * n_caps),
    ]


def worst_excursion(report, label, fraction=0.1):
    n_slots = int(fraction * len(report.curves) * report.traces[label].config.slots_per_interval)
    envelope = voltage_envelope(report.traces[label].voltage_frame(), n_slots=n_slots)
    return float(envelope["max_excursion"].max())


def learned_policy_wins(model, preset):
    """Per seed: (drlcap beats both baselines, drlcap flattens voltages at least as well as all-off)."""
    outcomes = []
    for seed in SEEDS:
        slots = RunConfig.from_preset(preset).slots_per_interval
        profile = synth_markov_profile(model, seed, default_chain_spec(model, N_INTERVALS + 1, slots))
        report = compare_policies(model, profile, baseline_configs(preset, model.n_caps, seed), max_workers=3)
        finals = final_time_avg(report.costs)
        cheaper = finals["drlcap"] <= finals["randcap"] and finals["drlcap"] <= finals["fixcap[000]"]
        flatter = worst_excursion(report, "drlcap") <= worst_excursion(report, "fixcap[000]")
        outcomes.append((cheaper, flatter))
    return outcomes


def test_sce47_learned_commitment_beats_baselines():
    outcomes = learned_policy_wins(bundled_feeder("sce47"), "sce47")
    assert sum(cheaper for cheaper, _ in outcomes) >= 4
    assert sum(flatter for _, flatter in outcomes) >= 4


def test_toy_feeder_learned_commitment_beats_baselines(toy_feeder):
    outcomes = learned_policy_wins(toy_feeder, "sce47")
    assert sum(cheaper for cheaper, _ in outcomes) >= 4


def test_schedule_fidelity_over_600_intervals(toy_feeder):
    profile = synth_markov_profile(toy_feeder, 11, default_chain_spec(toy_feeder, 601, 2))
    config = RunConfig(policy="drlcap", n_intervals=600, slots_per_interval=2, R=10, M=4, B=7, seed=11)
    trace = run_episode(toy_feeder, profile, config)

    assert trace.epsilons[0] == 1.0
    assert trace.epsilons[49] == pytest.approx(0.9)
    assert all(epsilon == 0.0 for epsilon in trace.epsilons[499:])
    assert trace.sync_log == list(range(7, 601, 7))
    assert max(trace.buffer_sizes) == 10
    assert check_cost_accounting(trace.cost_frame(), trace.voltage_frame(), toy_feeder.v0)


def test_identical_configs_give_identical_traces():
    model = bundled_feeder("sce47")
    profile = synth_markov_profile(model, 2, default_chain_spec(model, 201, 5))
    config = RunConfig.from_preset("sce47", policy="drlcap", n_intervals=200, seed=2)
    first = run_episode(model, profile, config)
    second = run_episode(model, profile, RunConfig.from_dict(config.to_dict()))
    assert first.actions == second.actions
    assert first.costs == second.costs
    np.testing.assert_array_equal(np.array(first.voltages), np.array(second.voltages))
