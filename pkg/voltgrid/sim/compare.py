"""
Run several policies over one scenario and align their results.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence

import pandas as pd

from voltgrid.analysis.summary import policy_ordering, voltage_envelope
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.feeder.profiles import ScenarioProfile
from voltgrid.powerflow.lindistflow import build_sensitivity
from voltgrid.sim.simulator import RunConfig, RunTrace, run_episode

logger = logging.getLogger(__name__)


@dataclass
class ComparisonReport:
    """
    Aligned results of several policies.

    curves holds one time-averaged cost column per policy indexed by tau;
    envelopes holds per-policy, per-bus voltage statistics.
    """
    traces: Dict[str, RunTrace]
    curves: pd.DataFrame
    costs: pd.DataFrame
    envelopes: pd.DataFrame
    ordering: List[str]


def _unique_labels(configs: Sequence[RunConfig]) -> List[str]:
    labels = []
    for config in configs:
        label = config.label
        count = sum(1 for existing in labels if existing == label or existing.startswith(f"{label}#"))
        labels.append(label if count == 0 else f"{label}#{count + 1}")
    return labels


def compare_policies(
    model: FeederModel,
    profile: ScenarioProfile,
    configs: Sequence[RunConfig],
    max_workers: int = 1
) -> ComparisonReport:
    """
    Run every config on the same profile.

    Args:
        model: Feeder
        profile: Scenario shared by all episodes
        configs: One config per episode
        max_workers: Episodes run concurrently when above 1; results do not
            depend on this value

    Returns:
        ComparisonReport
    """
    if not configs:
        raise ValueError("compare_policies needs at least one config")
    labels = _unique_labels(configs)
    # fill the shared cache before threads start
    build_sensitivity(model)
    logger.info(f"Comparing {len(configs)} policies: {', '.join(labels)}")

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = [executor.submit(run_episode, model, profile, config) for config in configs]
            results = [future.result() for future in futures]
    else:
        results = [run_episode(model, profile, config) for config in configs]

    traces: Dict[str, RunTrace] = {}
    for label, trace in zip(labels, results):
        trace.label = label
        traces[label] = trace

    costs = pd.concat([trace.cost_frame() for trace in traces.values()], ignore_index=True)
    curves = costs.pivot(index="tau", columns="policy", values="time_avg_cost")[labels]
    envelopes = pd.concat(
        [voltage_envelope(trace.voltage_frame()) for trace in traces.values()],
        ignore_index=True,
    )
    ordering = policy_ordering(costs)
    logger.info(f"Policy ordering by final time-averaged cost: {ordering}")
    return ComparisonReport(traces=traces, curves=curves, costs=costs, envelopes=envelopes, ordering=ordering)
