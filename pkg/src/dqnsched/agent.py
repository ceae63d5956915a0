"""Online neural fitted Q-learning: epsilon-greedy acting, replay, frozen target network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import EnvironmentSpec, Transition, encode_batch, env_step
from .network import (
    NetworkParams,
    OptimizerState,
    apply_update,
    batch_td_gradient,
    clone_params,
    forward,
    init_network,
)
from .replay import ReplayMemory
from .schedules import ScheduleState


@dataclass(frozen=True)
class AgentConfig:
    hidden_sizes: tuple[int, ...] = (24, 24)
    capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 500
    learn_every: int | None = 4
    warmup: int = 500
    clip: float | None = 1.0
    optimizer: str = "rmsprop"
    rms_decay: float = 0.95
    rms_eps: float = 0.01

    def __post_init__(self):
        if self.capacity < 1 or self.batch_size < 1 or self.target_sync < 1 or self.warmup < 0:
            raise ValueError("capacity, batch_size and C must be positive; warmup non-negative")
        if self.learn_every is not None and self.learn_every < 1:
            raise ValueError("learn_every must be positive or None (learning disabled)")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip must be positive or None")
        if self.optimizer not in ("sgd", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")


@dataclass
class StepLog:
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool
    episode_done: bool
    episode_return: float | None
    learned: bool


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability ``epsilon``, else greedy (lowest index on ties)."""
    q_values = np.asarray(q_values)
    if q_values.size == 0:
        raise ValueError("empty q_values")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q_values.size))
    return int(np.argmax(q_values))


def compute_targets(batch, target_params: NetworkParams, gamma: float, n_states: int | None = None) -> np.ndarray:
    """Bootstrap targets ``r + gamma * max_a' Q(s', a'; theta-)``, just ``r`` on terminal transitions.

    ``batch`` is either a sequence of :class:`Transition` or a tuple of column
    arrays ``(states, actions, rewards, next_states, terminals)``.
    """
    if isinstance(batch, tuple) and len(batch) == 5 and isinstance(batch[0], np.ndarray):
        _, _, rewards, next_states, terminals = batch
    else:
        if not batch:
            return np.zeros(0)
        rewards = np.array([t.reward for t in batch], dtype=float)
        next_states = np.array([t.next_state for t in batch], dtype=np.intp)
        terminals = np.array([t.terminal for t in batch], dtype=bool)
    if n_states is None:
        n_states = target_params.weights[0].shape[1]
    rewards = np.asarray(rewards, dtype=float)
    if gamma == 0.0:
        return rewards.copy()
    q_next = forward(target_params, encode_batch(next_states, n_states)).max(axis=1)
    return np.where(terminals, rewards, rewards + gamma * q_next)


@dataclass
class Agent:
    """Mutable training state of one run. ``hyper`` is read live at every step."""

    env: EnvironmentSpec
    params: NetworkParams
    config: AgentConfig
    hyper: ScheduleState
    rng: np.random.Generator
    replay_rng: np.random.Generator
    horizon: int
    target_params: NetworkParams = None
    memory: ReplayMemory = None
    opt: OptimizerState = None
    steps_done: int = 0
    current_state: int = 0
    episode_steps: int = 0
    episode_return: float = 0.0
    _eye: np.ndarray = field(default=None, repr=False)
    _q_cache: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.target_params is None:
            self.target_params = clone_params(self.params)
        if self.memory is None:
            self.memory = ReplayMemory(self.config.capacity)
        if self.opt is None:
            self.opt = OptimizerState(self.config.optimizer, self.config.rms_decay, self.config.rms_eps)
        self.current_state = self.env.start_state
        self._eye = np.eye(self.env.n_states)

    def q_values(self, state: int) -> np.ndarray:
        # Q for every state, recomputed only after the online parameters change.
        if self._q_cache is None:
            self._q_cache = forward(self.params, self._eye)
        return self._q_cache[state]

    def invalidate_cache(self) -> None:
        """Call after modifying ``params`` from outside the agent."""
        self._q_cache = None

    def sync_target(self) -> None:
        self.target_params = clone_params(self.params)

    def learn(self):
        """One minibatch update; returns the clipped TD errors."""
        cfg = self.config
        batch = self.memory.sample_arrays(cfg.batch_size, self.replay_rng)
        states, actions = batch[0], batch[1]
        targets = compute_targets(batch, self.target_params, self.hyper.gamma, self.env.n_states)
        grads, delta = batch_td_gradient(self.params, self._eye[states], actions, targets, cfg.clip)
        apply_update(self.params, grads, self.hyper.alpha, self.opt)
        self._q_cache = None
        return delta

    def train_step(self) -> StepLog:
        cfg = self.config
        s = self.current_state
        a = select_action(self.q_values(s), self.hyper.epsilon, self.rng)
        s2, r, terminal = env_step(self.env, s, a, self.rng)
        self.memory.push(Transition(s, a, r, s2, terminal))

        self.episode_steps += 1
        self.episode_return += r
        done = terminal or self.episode_steps >= self.horizon
        finished_return = None
        if done:
            finished_return = self.episode_return
            self.current_state = self.env.start_state
            self.episode_steps = 0
            self.episode_return = 0.0
        else:
            self.current_state = s2

        learned = False
        if (cfg.learn_every is not None and self.steps_done % cfg.learn_every == 0
                and self.memory.fill >= max(cfg.warmup, cfg.batch_size)):
            self.learn()
            learned = True
        if self.steps_done % cfg.target_sync == 0:
            self.sync_target()
        self.steps_done += 1
        return StepLog(s, a, r, s2, terminal, done, finished_return, learned)


def make_agent(env: EnvironmentSpec, config: AgentConfig, hyper: ScheduleState, seed: int,
               horizon: int | None = None) -> Agent:
    """Build an agent whose network, acting and replay streams all derive from ``seed``."""
    init_seed, act_seq, replay_seq = np.random.SeedSequence(seed).spawn(3)
    sizes = [env.n_states, *config.hidden_sizes, env.n_actions]
    params = init_network(sizes, int(init_seed.generate_state(1)[0]))
    return Agent(
        env=env,
        params=params,
        config=config,
        hyper=hyper,
        rng=np.random.default_rng(act_seq),
        replay_rng=np.random.default_rng(replay_seq),
        horizon=horizon if horizon is not None else 10 * env.n_states,
    )
