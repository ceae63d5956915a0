"""Deep Q-learning with per-epoch discount, learning-rate and exploration schedules."""

from .agent import AgentConfig, compute_targets, make_agent, select_action
from .config import ExperimentConfig, load_config, parse_config
from .exact_dp import bellman_backup, greedy_policy, solve, state_values
from .harness import compare, evaluate_policy, oracle_gap, relative_improvement, run_experiment
from .mdp import encode, env_step, make_env
from .schedules import ScheduleConfig, ScheduleState, controller_epoch_update, gamma_at_epoch, next_gamma

__version__ = "0.1.0"
