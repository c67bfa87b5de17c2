"""
JSON checkpoints for exact resume of a training run.
"""
import json
import logging
import os
from typing import Any, Dict, Tuple

import numpy as np

from voltgrid.config import ARTIFACT_VERSION
from voltgrid.drl.agent import DQNAgent
from voltgrid.drl.hyper import HyperQNetwork
from voltgrid.drl.network import QNetwork
from voltgrid.drl.replay import ReplayBuffer

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "voltgrid-dqn-checkpoint"


def agent_to_dict(agent: DQNAgent, tau: int) -> Dict[str, Any]:
    return {
        "kind": CHECKPOINT_KIND,
        "version": ARTIFACT_VERSION,
        "tau": int(tau),
        "n_buses": agent.n_buses,
        "n_caps": agent.n_caps,
        "hidden": list(agent.hidden),
        "gamma": agent.gamma,
        "batch": agent.batch,
        "target_sync": agent.target_sync,
        "hyper_k": agent.hyper_k,
        "beta": agent.beta,
        "output_scale": agent.output_scale,
        "cost_scale": agent.cost_scale,
        "train_steps": agent.train_steps,
        "sync_log": agent.sync_log,
        "network": agent.net.to_dict(),
        "buffer": agent.buffer.to_dict(),
        "rng_state": agent.rng.bit_generator.state,
        "last_state": agent.last_state.tolist() if agent.last_state is not None else None,
        "cost_sum": agent.cost_sum,
    }


def agent_from_dict(data: Dict[str, Any]) -> Tuple[DQNAgent, int]:
    if data.get("kind") != CHECKPOINT_KIND:
        raise ValueError("not a voltgrid DQN checkpoint")
    rng = np.random.Generator(getattr(np.random, data["rng_state"]["bit_generator"])())
    agent = DQNAgent(
        n_buses=data["n_buses"],
        n_caps=data["n_caps"],
        hidden=data["hidden"],
        gamma=data["gamma"],
        replay=data["buffer"]["capacity"],
        batch=data["batch"],
        target_sync=data["target_sync"],
        hyper_k=data["hyper_k"],
        beta=data["beta"],
        output_scale=data["output_scale"],
        cost_scale=data["cost_scale"],
        rng=rng,
    )
    if data["hyper_k"] == 1:
        agent.net = QNetwork.from_dict(data["network"])
    else:
        agent.net = HyperQNetwork.from_dict(data["network"])
    agent.buffer = ReplayBuffer.from_dict(data["buffer"])
    agent.train_steps = data["train_steps"]
    agent.sync_log = list(data["sync_log"])
    if data.get("last_state") is not None:
        agent.last_state = np.array(data["last_state"], dtype=float)
    agent.cost_sum = float(data.get("cost_sum", 0.0))
    # restored last: building the agent above consumed draws
    rng.bit_generator.state = data["rng_state"]
    return agent, int(data["tau"])


def save_checkpoint(agent: DQNAgent, tau: int, path: str):
    """
    Write the agent after interval tau.

    Args:
        agent: Agent to save
        tau: Last completed interval
        path: Output JSON file
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(agent_to_dict(agent, tau), f)
    logger.info(f"Saved checkpoint at interval {tau} to {path}")


def load_checkpoint(path: str) -> Tuple[DQNAgent, int]:
    """
    Read an agent written by save_checkpoint.

    Returns:
        Tuple (agent, last completed interval)
    """
    with open(path, "r") as f:
        data = json.load(f)
    agent, tau = agent_from_dict(data)
    logger.info(f"Loaded checkpoint from {path} (interval {tau}, version {data['version']})")
    return agent, tau
