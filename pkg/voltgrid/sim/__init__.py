"""
Two-timescale closed-loop simulation and policy comparison.
"""
from voltgrid.sim.simulator import (
    IntervalResult,
    POLICIES,
    RunConfig,
    RunTrace,
    TwoTimescaleSimulator,
    check_cost_accounting,
    check_timescale_separation,
    interval_cost,
    mdp_transition,
    run_episode,
)
from voltgrid.sim.traces import read_traces, write_traces
from voltgrid.sim.compare import ComparisonReport, compare_policies
