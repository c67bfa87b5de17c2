"""
Summaries of trace directories: final time-averaged costs, voltage
envelopes and the policy ordering, written as plot-ready JSON.
"""
import json
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from voltgrid.config import ARTIFACT_VERSION
from voltgrid.exceptions import TraceError

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
ENVELOPE_SLOTS = 100


def last_slots(voltages: pd.DataFrame, n_slots: Optional[int]) -> pd.DataFrame:
    """Rows of the final n_slots (tau, t) pairs of every policy."""
    if n_slots is None or voltages.empty:
        return voltages
    frames = []
    for _, group in voltages.groupby("policy", sort=False):
        slots = group[["tau", "t"]].drop_duplicates().sort_values(["tau", "t"]).tail(n_slots)
        frames.append(group.merge(slots, on=["tau", "t"]))
    return pd.concat(frames, ignore_index=True)


def voltage_envelope(voltages: pd.DataFrame, n_slots: Optional[int] = None) -> pd.DataFrame:
    """
    Per-policy, per-bus statistics of the squared voltage.

    Args:
        voltages: Voltage trace with columns tau, t, bus, v_pu, policy
        n_slots: Restrict to the final n_slots slots; all slots when None

    Returns:
        DataFrame with columns policy, bus, v_min, v_max, v_mean, max_excursion,
        where max_excursion is max |sqrt(v) - 1|
    """
    columns = ["policy", "bus", "v_min", "v_max", "v_mean", "max_excursion"]
    if voltages.empty:
        return pd.DataFrame(columns=columns)
    window = last_slots(voltages, n_slots)
    window = window.assign(excursion=np.abs(np.sqrt(window["v_pu"].clip(lower=0.0)) - 1.0))
    envelope = window.groupby(["policy", "bus"], sort=False).agg(
        v_min=("v_pu", "min"),
        v_max=("v_pu", "max"),
        v_mean=("v_pu", "mean"),
        max_excursion=("excursion", "max"),
    ).reset_index()
    return envelope[columns]


def final_time_avg(costs: pd.DataFrame) -> Dict[str, float]:
    finals = {}
    for policy, group in costs.groupby("policy", sort=False):
        finals[policy] = float(group.sort_values("tau")["time_avg_cost"].iloc[-1])
    return finals


def policy_ordering(costs: pd.DataFrame) -> List[str]:
    """Policies sorted by final time-averaged cost, lowest first."""
    finals = final_time_avg(costs)
    return sorted(finals, key=lambda policy: (finals[policy], policy))


def summarize(trace_dir: str, n_slots: int = ENVELOPE_SLOTS, write: bool = True) -> Dict[str, Any]:
    """
    Summarize the traces of a run or compare directory.

    Args:
        trace_dir: Directory written by run or compare
        n_slots: Number of final slots in the voltage envelope
        write: Also write summary.json into trace_dir

    Returns:
        Summary dict with one block per policy and the policy ordering

    Raises:
        TraceError: If the traces are missing or malformed
    """
    from voltgrid.sim.traces import read_traces

    logger.info(f"Summarizing traces in {trace_dir}")
    traces = read_traces(trace_dir)
    costs = traces["costs"]
    if costs.empty:
        raise TraceError(f"cost trace in {trace_dir} is empty")

    envelope = voltage_envelope(traces["voltages"], n_slots)
    finals = final_time_avg(costs)
    policies: Dict[str, Any] = {}
    for policy, group in costs.groupby("policy", sort=False):
        group = group.sort_values("tau")
        buses = envelope[envelope["policy"] == policy]
        policies[policy] = {
            "final_time_avg_cost": finals[policy],
            "n_intervals": int(len(group)),
            "time_avg_curve": group["time_avg_cost"].tolist(),
            "voltage_envelope": {
                "bus": buses["bus"].astype(int).tolist(),
                "v_min": buses["v_min"].tolist(),
                "v_max": buses["v_max"].tolist(),
                "v_mean": buses["v_mean"].tolist(),
                "max_excursion": buses["max_excursion"].tolist(),
            },
        }

    summary = {
        "version": ARTIFACT_VERSION,
        "envelope_slots": n_slots,
        "policies": policies,
        "ordering": policy_ordering(costs),
    }
    if write:
        path = os.path.join(trace_dir, SUMMARY_FILE)
        with open(path, "w") as f:
            json.dump(summary, f, indent=2)
        logger.info(f"Wrote summary of {len(policies)} policies to {path}")
    return summary
