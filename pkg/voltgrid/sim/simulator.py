"""
Two-timescale closed loop: a capacitor commitment per interval, inverter
setpoints per slot, with the DQN agent or one of the baseline policies
choosing the commitment.

Profile interval 1 is a bootstrap interval that only defines the initial
MDP state; episode interval tau consumes profile interval tau + 1.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from voltgrid.config import (
    HYPERPARAMETER_PRESETS,
    LEARNING_RATE,
    DEFAULT_PRESET,
    VOLTAGE_BUDGET,
)
from voltgrid.convexopt.box_qp import solve_box_qp
from voltgrid.convexopt.problem import (
    STATUS_OPTIMAL,
    SlotData,
    active_inverters,
    assemble_qp,
    setpoints_per_bus,
    slot_injections,
)
from voltgrid.convexopt.realtime import solve_realtime_relaxed
from voltgrid.convexopt.socp import solve_socp
from voltgrid.drl.actions import Action, action_from_index, action_from_y, n_actions
from voltgrid.drl.agent import DQNAgent
from voltgrid.exceptions import PowerFlowError, SlotSolveError, SolverError, VoltGridError
from voltgrid.feeder.feeder_model import FeederModel
from voltgrid.feeder.profiles import ScenarioProfile
from voltgrid.powerflow.lindistflow import Sensitivity, build_sensitivity

logger = logging.getLogger(__name__)

POLICIES = ("drlcap", "fixcap", "randcap", "realtime")
PHYSICS = ("linear", "socp")
PROGRESS_EVERY = 100


@dataclass
class RunConfig:
    """Settings of one episode."""
    policy: str = "drlcap"
    physics: str = "linear"
    gamma: float = 0.99
    R: int = 10
    M: int = 10
    B: int = 5
    K: int = 1
    beta: float = LEARNING_RATE
    seed: int = 0
    n_intervals: int = 100
    slots_per_interval: int = 5
    fixcap_pattern: Optional[Tuple[int, ...]] = None
    cost_scale: Optional[float] = None
    epsilon_override: Optional[float] = None
    hidden: Tuple[int, ...] = (44, 12)
    output_scale: Optional[float] = None
    solver_max_iter: Optional[int] = None

    @classmethod
    def from_preset(cls, preset: str = DEFAULT_PRESET, **overrides) -> "RunConfig":
        if preset not in HYPERPARAMETER_PRESETS:
            raise ValueError(f"unknown preset '{preset}'")
        values = HYPERPARAMETER_PRESETS[preset]
        config = cls(
            gamma=values["gamma"],
            R=values["replay"],
            M=values["batch"],
            B=values["target_sync"],
            K=values["hyper_k"],
            hidden=tuple(values["hidden"]),
            slots_per_interval=values["slots_per_interval"],
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(config, key, value)
        return config

    @property
    def label(self) -> str:
        """Policy name, with the pattern appended for fixcap."""
        if self.policy == "fixcap" and self.fixcap_pattern is not None:
            return f"fixcap[{''.join(str(bit) for bit in self.fixcap_pattern)}]"
        return self.policy

    def validate(self, model: FeederModel):
        """
        Raises:
            ValueError: On an unknown policy or physics, or violated bounds
        """
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy '{self.policy}', expected one of {POLICIES}")
        if self.physics not in PHYSICS:
            raise ValueError(f"unknown physics '{self.physics}', expected one of {PHYSICS}")
        if self.policy == "realtime" and self.physics != "linear":
            raise ValueError("the realtime policy runs on the linear model only")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.R >= self.M >= 1:
            raise ValueError(f"need R >= M >= 1, got R={self.R}, M={self.M}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.K < 1 or n_actions(model.n_caps) % self.K != 0:
            raise ValueError(f"K={self.K} must divide 2^{model.n_caps}")
        if self.n_intervals < 1 or self.slots_per_interval < 1:
            raise ValueError("n_intervals and slots_per_interval must be positive")
        if self.fixcap_pattern is not None and len(self.fixcap_pattern) != model.n_caps:
            raise ValueError(f"fixcap pattern must have {model.n_caps} entries, got {len(self.fixcap_pattern)}")
        if self.epsilon_override is not None and not 0.0 <= self.epsilon_override <= 1.0:
            raise ValueError(f"epsilon override must lie in [0, 1], got {self.epsilon_override}")
        if self.solver_max_iter is not None and self.solver_max_iter < 1:
            raise ValueError(f"solver iteration cap must be positive, got {self.solver_max_iter}")

    def resolved_cost_scale(self, model: FeederModel) -> float:
        if self.cost_scale is not None:
            return self.cost_scale
        return self.slots_per_interval * model.n_buses * VOLTAGE_BUDGET ** 2

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["hidden"] = list(self.hidden)
        record["fixcap_pattern"] = list(self.fixcap_pattern) if self.fixcap_pattern is not None else None
        return record

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        data = dict(data)
        data["hidden"] = tuple(data.get("hidden", (44, 12)))
        if data.get("fixcap_pattern") is not None:
            data["fixcap_pattern"] = tuple(int(bit) for bit in data["fixcap_pattern"])
        return cls(**data)


@dataclass
class IntervalResult:
    """Fast-timescale outcome of one interval."""
    cost: float
    voltages: np.ndarray
    setpoints: np.ndarray
    commitments: np.ndarray
    reports: List[Any] = field(default_factory=list, repr=False)


def _solve_slot(
    model: FeederModel,
    sens: Sensitivity,
    slot: SlotData,
    y_hat: np.ndarray,
    physics: str,
    max_iter: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray, Any]:
    limits = {} if max_iter is None else {"max_iter": max_iter}
    if physics == "socp":
        state, q_r, report = solve_socp(model, slot, y_hat, **limits)
        if report.status != STATUS_OPTIMAL:
            raise SolverError(f"SOCP solve ended with status {report.status} after {report.iterations} iterations", report)
        return state.v, q_r, report
    problem = assemble_qp(model, sens, slot, y_hat)
    q_r, report = solve_box_qp(problem, **limits)
    return problem.voltages(q_r), q_r, report


def interval_cost(
    model: FeederModel,
    profile: ScenarioProfile,
    tau: int,
    y_hat: Optional[np.ndarray],
    physics: str = "linear",
    sens: Optional[Sensitivity] = None,
    max_iter: Optional[int] = None
) -> IntervalResult:
    """
    Solve every slot of a profile interval with the commitment fixed.

    Args:
        model: Feeder
        profile: Scenario profile
        tau: Profile interval, 1-based
        y_hat: Binary commitment, or None to let the realtime baseline
            choose a commitment per slot
        physics: 'linear' (box QP) or 'socp'
        sens: Sensitivity matrices; built when omitted
        max_iter: Iteration cap handed to the slot solver; solver default when omitted

    Returns:
        IntervalResult; cost is the sum over slots of ||v - v0 1||^2

    Raises:
        SlotSolveError: When a slot solve fails, tagged with (tau, t). An SOCP
            solve that does not reach optimality counts as a failure; a box QP
            stopped at its cap or stalled keeps its box-feasible iterate
    """
    sens = sens if sens is not None else build_sensitivity(model)
    n_slots = profile.slots_per_interval
    inv_buses, _ = active_inverters(model)
    voltages = np.zeros((n_slots, model.n_buses))
    setpoints = np.zeros((n_slots, inv_buses.size))
    commitments = np.zeros((n_slots, model.n_caps), dtype=int)
    reports = []
    for t in range(1, n_slots + 1):
        slot = SlotData.from_profile(profile, tau, t)
        try:
            if y_hat is None:
                action, q_r, report = solve_realtime_relaxed(model, sens, slot, report_gap=False)
                y_slot = action.as_array()
                v = sens.voltages(*_realtime_injections(model, slot, y_slot, q_r))
            else:
                y_slot = np.asarray(y_hat)
                v, q_r, report = _solve_slot(model, sens, slot, y_slot, physics, max_iter)
        except (PowerFlowError, SolverError, ValueError) as e:
            raise SlotSolveError(f"{type(e).__name__}: {e}", tau, t) from e
        voltages[t - 1] = v
        setpoints[t - 1] = q_r
        commitments[t - 1] = y_slot
        reports.append(report)
    cost = float(np.sum((voltages - model.v0) ** 2))
    return IntervalResult(cost=cost, voltages=voltages, setpoints=setpoints, commitments=commitments, reports=reports)


def _realtime_injections(model: FeederModel, slot: SlotData, y: np.ndarray, q_r: np.ndarray):
    p, q = slot_injections(model, slot, y)
    return p, q + setpoints_per_bus(model, q_r)


def mdp_transition(profile: ScenarioProfile, tau: int, y_next: np.ndarray) -> np.ndarray:
    """
    MDP state after a profile interval: [p_bar; y_hat].

    Args:
        profile: Scenario profile
        tau: Completed profile interval, 1-based
        y_next: Commitment in force during that interval

    Returns:
        Vector of length N + N_a
    """
    p_bar = profile.interval_mean_injection(tau)
    return np.concatenate((p_bar, np.asarray(y_next, dtype=float)))


@dataclass
class RunTrace:
    """Records of one episode."""
    label: str
    config: RunConfig
    v0: float
    inverter_buses: np.ndarray
    prior_cost_sum: float = 0.0
    taus: List[int] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)
    epsilons: List[float] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    wall_clock: List[float] = field(default_factory=list)
    voltages: List[np.ndarray] = field(default_factory=list, repr=False)
    setpoints: List[np.ndarray] = field(default_factory=list, repr=False)
    commitments: List[np.ndarray] = field(default_factory=list, repr=False)
    states: List[np.ndarray] = field(default_factory=list, repr=False)
    losses: List[Optional[float]] = field(default_factory=list)
    buffer_sizes: List[int] = field(default_factory=list)
    solver_statuses: List[List[str]] = field(default_factory=list)
    sync_log: List[int] = field(default_factory=list)
    agent: Optional[DQNAgent] = field(default=None, repr=False)

    @property
    def n_intervals(self) -> int:
        return len(self.taus)

    def time_avg_cost(self) -> np.ndarray:
        """Running mean of costs over intervals 1..tau, earlier segments included."""
        costs = np.asarray(self.costs, dtype=float)
        return (self.prior_cost_sum + np.cumsum(costs)) / np.asarray(self.taus, dtype=float)

    def cost_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "tau": self.taus,
            "policy": self.label,
            "cost": self.costs,
            "time_avg_cost": self.time_avg_cost(),
            "epsilon": self.epsilons,
            "action_index": self.actions,
        }, columns=["tau", "policy", "cost", "time_avg_cost", "epsilon", "action_index"])

    def voltage_frame(self) -> pd.DataFrame:
        if not self.voltages:
            return pd.DataFrame(columns=["tau", "t", "bus", "v_pu", "policy"])
        V = np.stack(self.voltages)
        n, n_slots, n_buses = V.shape
        tau, t, bus = np.meshgrid(self.taus, np.arange(1, n_slots + 1), np.arange(1, n_buses + 1), indexing="ij")
        return pd.DataFrame({
            "tau": tau.ravel(),
            "t": t.ravel(),
            "bus": bus.ravel(),
            "v_pu": V.ravel(),
            "policy": self.label,
        })

    def setpoint_frame(self) -> pd.DataFrame:
        if not self.setpoints or self.inverter_buses.size == 0:
            return pd.DataFrame(columns=["tau", "t", "bus", "q_r_pu", "policy"])
        S = np.stack(self.setpoints)
        n, n_slots, m = S.shape
        tau, t, bus = np.meshgrid(self.taus, np.arange(1, n_slots + 1), self.inverter_buses, indexing="ij")
        return pd.DataFrame({
            "tau": tau.ravel(),
            "t": t.ravel(),
            "bus": bus.ravel(),
            "q_r_pu": S.ravel(),
            "policy": self.label,
        })


class TwoTimescaleSimulator:
    """
    Runs one episode of a policy over a scenario profile.
    """

    def __init__(
        self,
        model: FeederModel,
        profile: ScenarioProfile,
        config: RunConfig,
        agent: Optional[DQNAgent] = None,
        start_tau: int = 1,
        prior_cost_sum: Optional[float] = None
    ):
        """
        Initialize the simulator.

        Args:
            model: Feeder
            profile: Scenario; must hold start_tau + n_intervals intervals
            config: Episode settings
            agent: Pre-built (e.g. restored) agent for drlcap
            start_tau: First interval index, larger than 1 when resuming
            prior_cost_sum: Summed cost of intervals 1..start_tau-1; taken
                from the agent when omitted
        """
        config.validate(model)
        last_profile_interval = start_tau + config.n_intervals
        if profile.n_intervals < last_profile_interval:
            raise ValueError(
                f"profile holds {profile.n_intervals} intervals, need {last_profile_interval} "
                f"(one bootstrap interval plus {config.n_intervals})"
            )
        if profile.slots_per_interval != config.slots_per_interval:
            raise ValueError(
                f"profile has {profile.slots_per_interval} slots per interval, config expects {config.slots_per_interval}"
            )
        if profile.n_buses != model.n_buses:
            raise ValueError(f"profile covers {profile.n_buses} buses, feeder has {model.n_buses}")

        self.model = model
        self.profile = profile
        self.config = config
        self.start_tau = start_tau
        self.sens = build_sensitivity(model)
        self.rng = np.random.default_rng(config.seed)
        self.agent = agent
        if config.policy == "drlcap" and self.agent is None:
            self.agent = DQNAgent(
                n_buses=model.n_buses,
                n_caps=model.n_caps,
                hidden=config.hidden,
                gamma=config.gamma,
                replay=config.R,
                batch=config.M,
                target_sync=config.B,
                hyper_k=config.K,
                beta=config.beta,
                output_scale=config.output_scale,
                cost_scale=config.resolved_cost_scale(model),
                rng=self.rng,
            )
        pattern = config.fixcap_pattern if config.fixcap_pattern is not None else (0,) * model.n_caps
        self.fixed_action = action_from_y(pattern)
        self.trace = RunTrace(
            label=config.label,
            config=config,
            v0=model.v0,
            inverter_buses=active_inverters(model)[0],
            prior_cost_sum=self._prior_cost_sum(prior_cost_sum),
        )

    def _prior_cost_sum(self, given: Optional[float]) -> float:
        if self.start_tau == 1:
            return 0.0
        if given is not None:
            return float(given)
        if self.agent is not None:
            return self.agent.cost_sum
        logger.warning(f"Resuming at interval {self.start_tau} without a prior cost sum; time averages start from zero")
        return 0.0

    def initial_state(self) -> np.ndarray:
        """Bootstrap state: mean injection of the first profile interval, all capacitors off."""
        if self.agent is not None and self.agent.last_state is not None and self.start_tau > 1:
            return self.agent.last_state.copy()
        return mdp_transition(self.profile, self.start_tau, np.zeros(self.model.n_caps))

    def choose(self, state: np.ndarray, tau: int) -> Tuple[Optional[Action], float]:
        """Commitment for interval tau and the exploration probability used."""
        policy = self.config.policy
        if policy == "drlcap":
            epsilon = self.agent.epsilon(tau, self.config.epsilon_override)
            return self.agent.act(state, tau, epsilon), epsilon
        if policy == "fixcap":
            return self.fixed_action, math.nan
        if policy == "randcap":
            index = int(self.rng.integers(0, n_actions(self.model.n_caps)))
            return action_from_index(index, self.model.n_caps), math.nan
        return None, math.nan

    def step(self, state: np.ndarray, tau: int) -> np.ndarray:
        """Run interval tau; returns the next MDP state."""
        started = time.perf_counter()
        action, epsilon = self.choose(state, tau)
        profile_tau = tau + 1
        result = interval_cost(
            self.model,
            self.profile,
            profile_tau,
            action.as_array() if action is not None else None,
            physics=self.config.physics,
            sens=self.sens,
            max_iter=self.config.solver_max_iter,
        )
        if action is None:
            action = action_from_y(result.commitments[-1])
        next_state = mdp_transition(self.profile, profile_tau, action.as_array())

        loss = None
        if self.agent is not None:
            self.agent.observe(state, action, result.cost, next_state)
            loss = self.agent.learn()
            self.agent.maybe_sync(tau)

        trace = self.trace
        trace.taus.append(tau)
        trace.costs.append(result.cost)
        trace.epsilons.append(epsilon)
        trace.actions.append(action.index)
        trace.voltages.append(result.voltages)
        trace.setpoints.append(result.setpoints)
        trace.commitments.append(result.commitments)
        trace.states.append(next_state)
        trace.losses.append(loss)
        trace.buffer_sizes.append(len(self.agent.buffer) if self.agent is not None else 0)
        trace.solver_statuses.append([report.status for report in result.reports])
        unconverged = [t for t, status in enumerate(trace.solver_statuses[-1], start=1) if status != STATUS_OPTIMAL]
        if unconverged:
            logger.warning(f"[{trace.label}] interval {tau}: slots {unconverged} kept unconverged box QP iterates")
        trace.wall_clock.append(time.perf_counter() - started)
        logger.debug(f"[{trace.label}] interval {tau}: action {action.index}, cost {result.cost:.6e}")
        return next_state

    def run(self) -> RunTrace:
        """
        Execute the episode.

        Raises:
            VoltGridError: Solver or agent failures; the partial trace is
                attached to the exception as `trace`
        """
        state = self.initial_state()
        self.trace.states.append(state)
        first = self.start_tau
        last = self.start_tau + self.config.n_intervals - 1
        logger.info(f"Running {self.trace.label} ({self.config.physics}) for intervals {first}..{last}")
        quiet = logging.getLogger().getEffectiveLevel() > logging.INFO
        try:
            for tau in tqdm(range(first, last + 1), desc=self.trace.label, disable=quiet):
                state = self.step(state, tau)
                if tau % PROGRESS_EVERY == 0:
                    logger.info(
                        f"[{self.trace.label}] interval {tau}: time-averaged cost "
                        f"{self.trace.time_avg_cost()[-1]:.6e}"
                    )
        except VoltGridError as e:
            logger.error(f"[{self.trace.label}] episode aborted: {e}")
            e.trace = self.finish()
            raise
        return self.finish()

    def finish(self) -> RunTrace:
        if self.agent is not None:
            self.trace.agent = self.agent
            self.trace.sync_log = list(self.agent.sync_log)
        return self.trace


def run_episode(
    model: FeederModel,
    profile: ScenarioProfile,
    config: RunConfig,
    agent: Optional[DQNAgent] = None,
    start_tau: int = 1,
    prior_cost_sum: Optional[float] = None
) -> RunTrace:
    """Run one episode; see TwoTimescaleSimulator."""
    return TwoTimescaleSimulator(
        model, profile, config, agent=agent, start_tau=start_tau, prior_cost_sum=prior_cost_sum
    ).run()


def check_timescale_separation(trace: RunTrace) -> bool:
    """
    Commitments must be constant within each interval and equal the logged
    action. The realtime baseline commits per slot and is exempt.
    """
    if trace.config.policy == "realtime":
        return True
    n_caps = trace.commitments[0].shape[1] if trace.commitments else 0
    for tau, action, commitments in zip(trace.taus, trace.actions, trace.commitments):
        expected = action_from_index(action, n_caps).as_array()
        if not np.all(commitments == expected):
            logger.warning(f"Commitment changed within interval {tau}")
            return False
    return True


def check_cost_accounting(costs: pd.DataFrame, voltages: pd.DataFrame, v0: float, tol: float = 1e-12) -> bool:
    """
    Logged interval costs must equal the summed slot deviations of the
    logged voltages, and time averages must match their running mean. A
    segment that starts after interval 1 carries the summed cost of the
    earlier intervals, which must be the same for every row.
    """
    deviations = voltages.assign(dev=(voltages["v_pu"] - v0) ** 2).groupby(["policy", "tau"])["dev"].sum()
    for row in costs.itertuples(index=False):
        summed = float(deviations.get((row.policy, row.tau), 0.0))
        if abs(summed - row.cost) > tol * max(1.0, abs(row.cost)):
            logger.warning(f"Cost mismatch for {row.policy} interval {row.tau}: {row.cost} vs {summed}")
            return False
    for _, group in costs.groupby("policy"):
        group = group.sort_values("tau")
        taus = group["tau"].to_numpy(dtype=float)
        if np.any(np.diff(taus) != 1):
            logger.warning("Cost trace intervals are not consecutive")
            return False
        prior = group["time_avg_cost"].to_numpy() * taus - np.cumsum(group["cost"].to_numpy())
        if taus[0] == 1 and abs(prior[0]) > tol:
            return False
        if prior[0] < -tol or not np.allclose(prior, prior[0], rtol=0.0, atol=tol * taus.max()):
            logger.warning(f"Time-averaged costs of {group['policy'].iloc[0]} do not match their running mean")
            return False
    return True
