from __future__ import annotations

import numpy as np

from .mdp import Transition


class UnderfilledMemoryError(RuntimeError):
    pass


class ReplayMemory:
    """Ring buffer of transitions, stored column-wise for fast batch sampling.

    Once full, each push overwrites the oldest entry, so the memory always holds
    the most recent ``capacity`` transitions.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros(self.capacity, dtype=np.intp)
        self.actions = np.zeros(self.capacity, dtype=np.intp)
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros(self.capacity, dtype=np.intp)
        self.terminals = np.zeros(self.capacity, dtype=bool)
        self.cursor = 0
        self.fill = 0

    def __len__(self):
        return self.fill

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.terminals[i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.fill = min(self.fill + 1, self.capacity)

    def _get(self, i: int) -> Transition:
        return Transition(int(self.states[i]), int(self.actions[i]), float(self.rewards[i]),
                          int(self.next_states[i]), bool(self.terminals[i]))

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self.cursor if self.fill == self.capacity else 0
        return [self._get((start + k) % self.capacity) for k in range(self.fill)]

    def sample_indices(self, batch_size: int, rng: np.random.Generator, strict: bool = True) -> np.ndarray:
        """Uniform indices with replacement.

        ``strict`` requires at least ``batch_size`` stored transitions; otherwise
        any non-empty memory may be oversampled.
        """
        needed = batch_size if strict else 1
        if self.fill < needed:
            raise UnderfilledMemoryError(f"memory holds {self.fill} transitions, batch needs {needed}")
        return rng.integers(0, self.fill, size=batch_size)

    def sample_arrays(self, batch_size: int, rng: np.random.Generator, strict: bool = True):
        """Uniform draw as ``(states, actions, rewards, next_states, terminals)``."""
        idx = self.sample_indices(batch_size, rng, strict)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])

    def sample(self, batch_size: int, rng: np.random.Generator, strict: bool = True) -> list[Transition]:
        return [self._get(int(i)) for i in self.sample_indices(batch_size, rng, strict)]
