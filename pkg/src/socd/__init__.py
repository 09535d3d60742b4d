"""Offline-RL scheduler for multi-user delay-constrained networks.

Core pieces: delay-sensitive queueing simulators (single- and multi-hop),
offline dataset tooling with lambda-relabelable rewards, a score-based
diffusion behavior-cloning policy, a sampling-free twin critic, critic-
guided action selection, and Lagrange-multiplier optimization of the
average resource constraint.
"""

from .config import ConfigError, EnvConfig, MultiHopConfig, load_config
from .critic import CriticPair, mc_returns
from .dataset import (DataFormatError, OfflineDataset, Transition, generate,
                      read_dataset, write_dataset)
from .diffusion import DiffusionSchedule, ScoreModel, sample_actions, train_bc
from .env import SingleHopEnv, success_prob
from .evaluate import EvalReport, evaluate, sweep
from .loop import (LagrangeState, SelectionConfig, SOCDPolicy, TrainConfig,
                   decompose_state, estimate_consumption, lagrange_update,
                   select_action, train)
from .multihop import MultiHopEnv

__version__ = "0.1.0"
