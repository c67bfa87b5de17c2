"""
Exhaustive capacitor-commitment oracle for auditing the policies.
"""
import logging
from typing import Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from voltgrid.config import ENUMERATION_LIMIT
from voltgrid.drl.actions import all_actions
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.feeder.profiles import ScenarioProfile
from voltgrid.powerflow.lindistflow import build_sensitivity
from voltgrid.sim.simulator import interval_cost

logger = logging.getLogger(__name__)


def oracle_costs(
    model: FeederModel,
    profile: ScenarioProfile,
    n_intervals: Optional[int] = None,
    physics: str = "linear"
) -> pd.DataFrame:
    """
    Best fixed commitment per interval by enumerating all 2^N_a actions.

    Interval tau is evaluated on profile interval tau + 1, matching the
    episode indexing of the simulator.

    Args:
        model: Feeder
        profile: Scenario profile
        n_intervals: Number of episode intervals; all available when None
        physics: 'linear' or 'socp'

    Returns:
        DataFrame with columns tau, best_action_index, best_cost, all_off_cost,
        worst_cost

    Raises:
        ValueError: If the feeder has more than ENUMERATION_LIMIT capacitors
    """
    if model.n_caps > ENUMERATION_LIMIT:
        raise ValueError(
            f"enumeration over {model.n_caps} capacitors exceeds the limit of {ENUMERATION_LIMIT}"
        )
    available = profile.n_intervals - 1
    n_intervals = available if n_intervals is None else n_intervals
    if not 1 <= n_intervals <= available:
        raise ValueError(f"n_intervals must lie in 1..{available}, got {n_intervals}")

    sens = build_sensitivity(model)
    actions = all_actions(model.n_caps)
    logger.info(f"Enumerating {len(actions)} commitments over {n_intervals} intervals")
    quiet = logging.getLogger().getEffectiveLevel() > logging.INFO
    rows = []
    for tau in tqdm(range(1, n_intervals + 1), desc="oracle", disable=quiet):
        costs = np.array([
            interval_cost(model, profile, tau + 1, action.as_array(), physics=physics, sens=sens).cost
            for action in actions
        ])
        best = int(np.argmin(costs))
        rows.append({
            "tau": tau,
            "best_action_index": actions[best].index,
            "best_cost": float(costs[best]),
            "all_off_cost": float(costs[0]),
            "worst_cost": float(costs.max()),
        })
    return pd.DataFrame(rows, columns=["tau", "best_action_index", "best_cost", "all_off_cost", "worst_cost"])


def audit_policy(costs: pd.DataFrame, oracle: pd.DataFrame) -> pd.DataFrame:
    """
    Join a cost trace with the oracle table and add the per-interval regret.

    Returns:
        The cost trace with best_cost and regret columns
    """
    merged = costs.merge(oracle[["tau", "best_cost"]], on="tau", how="left")
    return merged.assign(regret=merged["cost"] - merged["best_cost"])
