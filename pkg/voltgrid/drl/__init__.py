"""
Deep Q-learning for slow-timescale capacitor commitment.
"""
from voltgrid.drl.actions import Action, action_from_bits, action_from_index, action_from_y, all_actions, n_actions
from voltgrid.drl.network import QNetwork, numerical_gradient, q_forward
from voltgrid.drl.hyper import HyperQNetwork, hyper_forward
from voltgrid.drl.replay import Batch, Experience, ReplayBuffer
from voltgrid.drl.training import (
    epsilon_schedule,
    hyper_train_step,
    select_action,
    sgd_step,
    sync_target,
    td_targets,
    train_step,
)
from voltgrid.drl.agent import DQNAgent, build_network
from voltgrid.drl.checkpoint import load_checkpoint, save_checkpoint
from voltgrid.drl.value_iteration import value_iteration
