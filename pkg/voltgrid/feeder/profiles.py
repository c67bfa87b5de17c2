"""
Scenario profiles: per-(interval, slot, bus) consumption and generation.
Provides CSV ingestion, validation and a seeded Markov-chain synthesizer.
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Any, Tuple

import numpy as np
import pandas as pd

from voltgrid.exceptions import (
    ChainSpecError,
    ProfileFormatError,
    ProfileValidationError,
)
from voltgrid.feeder.feeder_model import FeederModel

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ["tau", "t", "bus", "p_c", "q_c", "p_g"]
STOCHASTIC_TOL = 1e-9
CAPACITY_TOL = 1e-12

# Nominal per-bus load used by the default chain when the feeder has no entry.
NOMINAL_LOAD_PU = {"sce47": 0.02, "ieee123": 0.008}
DEFAULT_NOMINAL_LOAD_PU = 0.02


@dataclass(frozen=True, eq=False)
class ScenarioProfile:
    """
    Dense exogenous input indexed (tau, t, bus), all per-unit.

    Arrays have shape (n_intervals, slots_per_interval, N); the public
    accessors take 1-based tau and t.
    """
    n_intervals: int
    slots_per_interval: int
    p_c: np.ndarray
    q_c: np.ndarray
    p_g: np.ndarray

    @property
    def n_buses(self) -> int:
        return int(self.p_c.shape[2])

    def slot(self, tau: int, t: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Get the (p_c, q_c, p_g) vectors of one slot.

        Args:
            tau: Interval index, 1-based
            t: Slot index within the interval, 1-based

        Returns:
            Tuple of per-bus vectors
        """
        self._check_index(tau, t)
        return self.p_c[tau - 1, t - 1], self.q_c[tau - 1, t - 1], self.p_g[tau - 1, t - 1]

    def net_active(self, tau: int, t: int) -> np.ndarray:
        """Net active injection p = p_g - p_c of one slot."""
        p_c, _, p_g = self.slot(tau, t)
        return p_g - p_c

    def interval_mean_injection(self, tau: int) -> np.ndarray:
        """Mean net active injection per bus over the slots of interval tau."""
        self._check_index(tau, 1)
        return (self.p_g[tau - 1] - self.p_c[tau - 1]).mean(axis=0)

    def _check_index(self, tau: int, t: int):
        if not 1 <= tau <= self.n_intervals:
            raise IndexError(f"interval {tau} outside 1..{self.n_intervals}")
        if not 1 <= t <= self.slots_per_interval:
            raise IndexError(f"slot {t} outside 1..{self.slots_per_interval}")


def _make_profile(p_c: np.ndarray, q_c: np.ndarray, p_g: np.ndarray) -> ScenarioProfile:
    for array in (p_c, q_c, p_g):
        array.setflags(write=False)
    n_intervals, slots, _ = p_c.shape
    return ScenarioProfile(
        n_intervals=int(n_intervals),
        slots_per_interval=int(slots),
        p_c=p_c,
        q_c=q_c,
        p_g=p_g,
    )


def validate_profile(profile: ScenarioProfile, model: FeederModel):
    """
    Check the profile invariants against a feeder.

    Args:
        profile: Profile to check
        model: Feeder supplying device placement and PV capacities

    Raises:
        ProfileValidationError: Naming the first violated invariant
    """
    if profile.n_buses != model.n_buses:
        raise ProfileValidationError(
            f"profile has {profile.n_buses} buses, feeder has {model.n_buses}"
        )
    for label, array in (("p_c", profile.p_c), ("q_c", profile.q_c), ("p_g", profile.p_g)):
        if not np.all(np.isfinite(array)):
            raise ProfileValidationError(f"{label} holds non-finite values")
        if np.any(array < 0):
            tau, t, bus = np.argwhere(array < 0)[0]
            raise ProfileValidationError(
                f"{label} is negative at tau={tau + 1}, t={t + 1}, bus={bus + 1}"
            )

    cap_index = model.cap_buses - 1
    if cap_index.size:
        if np.any(profile.p_c[:, :, cap_index] != 0) or np.any(profile.q_c[:, :, cap_index] != 0):
            raise ProfileValidationError("consumption must be zero at capacitor buses")
        if np.any(profile.p_g[:, :, cap_index] != 0):
            raise ProfileValidationError("generation must be zero at capacitor buses")

    p_cap = model.p_cap_per_bus()
    excess = profile.p_g - p_cap[None, None, :]
    if np.any(excess > CAPACITY_TOL):
        tau, t, bus = np.argwhere(excess > CAPACITY_TOL)[0]
        raise ProfileValidationError(
            f"p_g={profile.p_g[tau, t, bus]} exceeds PV capacity {p_cap[bus]} "
            f"at tau={tau + 1}, t={t + 1}, bus={bus + 1}"
        )


def load_profiles(
    path: str,
    model: FeederModel,
    n_intervals: Optional[int] = None,
    slots_per_interval: Optional[int] = None
) -> ScenarioProfile:
    """
    Load a profile CSV into a dense ScenarioProfile.

    Missing (tau, t, bus) rows default to zero. The shape is taken from the
    arguments when given, else from the largest tau and t in the file.

    Args:
        path: CSV with header tau,t,bus,p_c,q_c,p_g
        model: Feeder the profile belongs to
        n_intervals: Declared number of intervals
        slots_per_interval: Declared number of slots per interval

    Returns:
        Validated ScenarioProfile

    Raises:
        ProfileFormatError: If the CSV cannot be parsed or the shape is unknown
        ProfileValidationError: If bus indices or values violate invariants
    """
    logger.info(f"Loading profiles from {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise ProfileFormatError(f"profile file {path} has no header") from e
    except pd.errors.ParserError as e:
        raise ProfileFormatError(f"cannot parse profile file {path}: {e}") from e

    if list(df.columns) != PROFILE_COLUMNS:
        raise ProfileFormatError(
            f"profile header must be {','.join(PROFILE_COLUMNS)}, got {','.join(map(str, df.columns))}"
        )

    try:
        index = df[["tau", "t", "bus"]].astype("int64")
        values = df[["p_c", "q_c", "p_g"]].astype(float)
    except (TypeError, ValueError) as e:
        raise ProfileFormatError(f"non-numeric entry in {path}: {e}") from e

    if n_intervals is None:
        if df.empty:
            raise ProfileFormatError("empty profile needs a declared n_intervals")
        n_intervals = int(index["tau"].max())
    if slots_per_interval is None:
        if df.empty:
            raise ProfileFormatError("empty profile needs a declared slots_per_interval")
        slots_per_interval = int(index["t"].max())

    n = model.n_buses
    shape = (n_intervals, slots_per_interval, n)
    if not df.empty:
        for column, upper in (("tau", n_intervals), ("t", slots_per_interval), ("bus", n)):
            bad = index[(index[column] < 1) | (index[column] > upper)]
            if not bad.empty:
                raise ProfileValidationError(
                    f"{column}={int(bad[column].iloc[0])} out of range 1..{upper}"
                )
        if index.duplicated().any():
            row = index[index.duplicated()].iloc[0]
            raise ProfileValidationError(
                f"duplicate row for tau={row['tau']}, t={row['t']}, bus={row['bus']}"
            )

    arrays = {}
    taus = index["tau"].to_numpy() - 1
    slots = index["t"].to_numpy() - 1
    buses = index["bus"].to_numpy() - 1
    for column in ("p_c", "q_c", "p_g"):
        array = np.zeros(shape)
        array[taus, slots, buses] = values[column].to_numpy()
        arrays[column] = array

    profile = _make_profile(arrays["p_c"], arrays["q_c"], arrays["p_g"])
    validate_profile(profile, model)
    logger.info(f"Loaded profile with {n_intervals} intervals x {slots_per_interval} slots")
    return profile


def save_profiles(profile: ScenarioProfile, path: str):
    """
    Write a profile to CSV, keeping only rows with a nonzero entry.

    Args:
        profile: Profile to write
        path: Output CSV path
    """
    n_int, n_slot, n = profile.p_c.shape
    tau, t, bus = np.meshgrid(
        np.arange(1, n_int + 1), np.arange(1, n_slot + 1), np.arange(1, n + 1), indexing="ij"
    )
    df = pd.DataFrame({
        "tau": tau.ravel(),
        "t": t.ravel(),
        "bus": bus.ravel(),
        "p_c": profile.p_c.ravel(),
        "q_c": profile.q_c.ravel(),
        "p_g": profile.p_g.ravel(),
    })
    df = df[(df[["p_c", "q_c", "p_g"]] != 0).any(axis=1)]
    df.to_csv(path, index=False)
    logger.info(f"Saved {len(df)} profile rows to {path}")


@dataclass(frozen=True)
class MarkovChainSpec:
    """
    Per-slot Markov chains for consumption and PV output.

    load_levels is a grid of p_c values (per-unit), either shared (S,) or
    per-bus (N, S). pv_levels holds fractions of each inverter's p_cap in
    [0, 1], shared (G,) or per-bus (N, G). Reactive consumption follows
    from the load power factor.
    """
    n_intervals: int
    slots_per_interval: int
    load_levels: np.ndarray
    load_transition: np.ndarray
    pv_levels: np.ndarray
    pv_transition: np.ndarray
    power_factor: float = 0.8


def _check_transition(matrix: np.ndarray, label: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ChainSpecError(f"{label} transition matrix must be square, got {matrix.shape}")
    if np.any(matrix < 0):
        raise ChainSpecError(f"{label} transition matrix has negative entries")
    sums = matrix.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
        row = int(np.argmax(np.abs(sums - 1.0)))
        raise ChainSpecError(
            f"{label} transition matrix is not row-stochastic: row {row} sums to {sums[row]!r}"
        )
    return matrix


def _level_grid(levels: np.ndarray, n_states: int, n_buses: int, label: str) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = np.tile(levels, (n_buses, 1))
    if levels.shape != (n_buses, n_states):
        raise ChainSpecError(
            f"{label} levels must have shape ({n_states},) or ({n_buses}, {n_states}), got {levels.shape}"
        )
    return levels


def simulate_chain(
    transition: np.ndarray,
    n_chains: int,
    n_steps: int,
    rng: np.random.Generator
) -> np.ndarray:
    """
    Simulate independent realizations of one Markov chain.

    Args:
        transition: Row-stochastic matrix
        n_chains: Number of independent chains
        n_steps: Trajectory length
        rng: Random generator

    Returns:
        Integer state array of shape (n_steps, n_chains)
    """
    n_states = transition.shape[0]
    cumulative = np.cumsum(transition, axis=1)
    cumulative[:, -1] = 1.0
    states = np.empty((n_steps, n_chains), dtype=int)
    if n_steps == 0:
        return states
    current = rng.integers(n_states, size=n_chains)
    states[0] = current
    for step in range(1, n_steps):
        draws = rng.random(n_chains)
        current = (draws[:, None] >= cumulative[current]).sum(axis=1)
        current = np.minimum(current, n_states - 1)
        states[step] = current
    return states


def synth_markov_profile(model: FeederModel, seed: int, params: MarkovChainSpec) -> ScenarioProfile:
    """
    Synthesize a profile whose per-bus trajectories follow Markov chains.

    Args:
        model: Feeder supplying device placement
        seed: Seed for numpy's default generator
        params: Chain specification

    Returns:
        Validated ScenarioProfile, a pure function of (model, seed, params)

    Raises:
        ChainSpecError: If a transition matrix is not row-stochastic or levels are invalid
    """
    load_transition = _check_transition(params.load_transition, "load")
    pv_transition = _check_transition(params.pv_transition, "pv")
    n = model.n_buses
    load_levels = _level_grid(params.load_levels, load_transition.shape[0], n, "load")
    pv_levels = _level_grid(params.pv_levels, pv_transition.shape[0], n, "pv")
    if np.any(load_levels < 0):
        raise ChainSpecError("load levels must be non-negative")
    if np.any(pv_levels < 0) or np.any(pv_levels > 1):
        raise ChainSpecError("pv levels are fractions of capacity and must lie in [0, 1]")
    if not 0 < params.power_factor <= 1:
        raise ChainSpecError(f"power factor must lie in (0, 1], got {params.power_factor}")

    logger.info(f"Synthesizing Markov profile with seed {seed}")
    rng = np.random.default_rng(seed)
    n_steps = params.n_intervals * params.slots_per_interval
    shape = (params.n_intervals, params.slots_per_interval, n)

    load_buses = np.setdiff1d(np.arange(1, n + 1), model.cap_buses)
    pv_buses = model.inv_buses[model.inv_p_cap > 0]

    p_c = np.zeros((n_steps, n))
    load_states = simulate_chain(load_transition, load_buses.size, n_steps, rng)
    rows = load_levels[load_buses - 1]
    p_c[:, load_buses - 1] = rows[np.arange(load_buses.size)[None, :], load_states]

    p_g = np.zeros((n_steps, n))
    pv_states = simulate_chain(pv_transition, pv_buses.size, n_steps, rng)
    fractions = pv_levels[pv_buses - 1][np.arange(pv_buses.size)[None, :], pv_states]
    p_g[:, pv_buses - 1] = fractions * model.p_cap_per_bus()[pv_buses - 1][None, :]

    q_c = p_c * math.tan(math.acos(params.power_factor))

    profile = _make_profile(p_c.reshape(shape), q_c.reshape(shape), p_g.reshape(shape))
    validate_profile(profile, model)
    return profile


def default_chain_spec(
    model: FeederModel,
    n_intervals: int,
    slots_per_interval: int,
    load_scale: Optional[float] = None
) -> MarkovChainSpec:
    """
    Three-level sticky chains for load and PV.

    Args:
        model: Feeder (its name selects the nominal load)
        n_intervals: Number of intervals to generate
        slots_per_interval: Slots per interval
        load_scale: Peak per-bus load in per-unit

    Returns:
        MarkovChainSpec
    """
    scale = load_scale if load_scale is not None else NOMINAL_LOAD_PU.get(model.name, DEFAULT_NOMINAL_LOAD_PU)
    sticky = np.array([
        [0.96, 0.04, 0.00],
        [0.02, 0.96, 0.02],
        [0.00, 0.04, 0.96],
    ])
    return MarkovChainSpec(
        n_intervals=n_intervals,
        slots_per_interval=slots_per_interval,
        load_levels=scale * np.array([0.3, 0.65, 1.0]),
        load_transition=sticky,
        pv_levels=np.array([0.0, 0.5, 1.0]),
        pv_transition=sticky,
        power_factor=0.8,
    )


def load_chain_spec(path: str, n_intervals: int, slots_per_interval: int) -> MarkovChainSpec:
    """
    Load a chain specification from JSON.

    Keys: load_levels, load_transition, pv_levels, pv_transition and an
    optional power_factor.

    Args:
        path: JSON file
        n_intervals: Number of intervals to generate
        slots_per_interval: Slots per interval

    Returns:
        MarkovChainSpec
    """
    try:
        with open(path, 'r') as f:
            data = json.load(f)
        return MarkovChainSpec(
            n_intervals=n_intervals,
            slots_per_interval=slots_per_interval,
            load_levels=np.asarray(data["load_levels"], dtype=float),
            load_transition=np.asarray(data["load_transition"], dtype=float),
            pv_levels=np.asarray(data["pv_levels"], dtype=float),
            pv_transition=np.asarray(data["pv_transition"], dtype=float),
            power_factor=float(data.get("power_factor", 0.8)),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ChainSpecError(f"malformed chain spec {path}: {e}") from e
