"""Finite MDPs: the tabular environment description and three toy families.

Every environment is a fully enumerated transition table, so the same object
drives both simulation (:func:`env_step`) and exact dynamic programming
(:mod:`dqnsched.exact_dp`).

Terminal states carry a zero-reward absorbing self-loop so that every
(state, action) row is a proper distribution; stepping from them is refused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

LEFT = 0
RIGHT = 1

# SlipperyGrid action order
UP, GRID_RIGHT, DOWN, GRID_LEFT = 0, 1, 2, 3
_MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))

ENV_NAMES = ("DelayedChain", "TrapChain", "SlipperyGrid")


class InvalidParameterError(ValueError):
    """Environment parameters outside the family's valid range."""


class ContractViolation(RuntimeError):
    """An operation was called outside its precondition (e.g. stepping a terminal)."""


class Outcome(NamedTuple):
    next_state: int
    probability: float
    reward: float
    terminal: bool


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool


@dataclass(frozen=True)
class EnvironmentSpec:
    """Complete tabular MDP.

    ``transition[s][a]`` lists the possible :class:`Outcome` of taking ``a`` in
    ``s``. A sampled outcome fixes the next state, the reward and whether the
    episode ends.
    """

    n_states: int
    n_actions: int
    transition: tuple[tuple[tuple[Outcome, ...], ...], ...]
    start_state: int
    terminal_states: frozenset[int]
    name: str = "custom"
    optimal_score: float = 1.0
    _cum: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        _validate(self)
        cum = tuple(
            tuple(np.cumsum([o.probability for o in row]) for row in rows)
            for rows in self.transition
        )
        object.__setattr__(self, "_cum", cum)

    def is_terminal(self, state: int) -> bool:
        return state in self.terminal_states

    @property
    def non_terminal_states(self) -> list[int]:
        return [s for s in range(self.n_states) if s not in self.terminal_states]


def _validate(spec: EnvironmentSpec) -> None:
    if spec.n_states < 1 or spec.n_actions < 1:
        raise InvalidParameterError("n_states and n_actions must be positive")
    if len(spec.transition) != spec.n_states:
        raise InvalidParameterError("transition table must have one row per state")
    for s, rows in enumerate(spec.transition):
        if len(rows) != spec.n_actions:
            raise InvalidParameterError(f"state {s}: expected {spec.n_actions} actions")
        for a, outcomes in enumerate(rows):
            if not outcomes:
                raise InvalidParameterError(f"({s}, {a}) has no outcomes")
            total = 0.0
            for o in outcomes:
                if not 0 <= o.next_state < spec.n_states:
                    raise InvalidParameterError(f"({s}, {a}): next state {o.next_state} out of range")
                if not 0.0 <= o.probability <= 1.0:
                    raise InvalidParameterError(f"({s}, {a}): probability {o.probability} outside [0, 1]")
                if not math.isfinite(o.reward):
                    raise InvalidParameterError(f"({s}, {a}): non-finite reward")
                total += o.probability
            if abs(total - 1.0) > 1e-12:
                raise InvalidParameterError(f"({s}, {a}): probabilities sum to {total}")
    if not 0 <= spec.start_state < spec.n_states:
        raise InvalidParameterError("start_state out of range")
    if spec.start_state in spec.terminal_states:
        raise InvalidParameterError("start_state must be non-terminal")


def _absorbing(s: int, n_actions: int) -> tuple[tuple[Outcome, ...], ...]:
    return tuple((Outcome(s, 1.0, 0.0, True),) for _ in range(n_actions))


def _chain_rows(n: int, r_trap: float | None):
    rows = []
    goal = n - 1
    for s in range(n):
        if s == goal:
            rows.append(_absorbing(s, 2))
            continue
        if s == 0 and r_trap is not None:
            left = Outcome(0, 1.0, float(r_trap), True)
        else:
            left = Outcome(max(s - 1, 0), 1.0, 0.0, False)
        nxt = s + 1
        right = Outcome(nxt, 1.0, 1.0, True) if nxt == goal else Outcome(nxt, 1.0, 0.0, False)
        rows.append(((left,), (right,)))
    return tuple(rows)


def delayed_chain(n: int) -> EnvironmentSpec:
    """Chain 0..n-1 starting at 0; entering n-1 pays 1 and ends the episode."""
    if int(n) != n or n < 2:
        raise InvalidParameterError(f"DelayedChain needs n >= 2, got {n}")
    n = int(n)
    return EnvironmentSpec(n, 2, _chain_rows(n, None), 0, frozenset({n - 1}), name="DelayedChain")


def trap_chain(n: int, r_trap: float = 0.1) -> EnvironmentSpec:
    """DelayedChain where LEFT at state 0 pays ``r_trap`` and ends the episode."""
    if int(n) != n or n < 2:
        raise InvalidParameterError(f"TrapChain needs n >= 2, got {n}")
    if not math.isfinite(r_trap):
        raise InvalidParameterError("r_trap must be finite")
    n = int(n)
    return EnvironmentSpec(
        n, 2, _chain_rows(n, r_trap), 0, frozenset({n - 1}),
        name="TrapChain", optimal_score=max(1.0, float(r_trap)),
    )


def slippery_grid(width: int, height: int, p_slip: float) -> EnvironmentSpec:
    """Grid world; cell (x, y) is state ``y * width + x``.

    With probability ``p_slip`` the move direction is replaced by a uniformly
    random one (which may coincide with the intended move). Walls clamp.
    Start is (0, 0); reaching (width-1, height-1) pays 1 and terminates.
    """
    if int(width) != width or int(height) != height or width < 1 or height < 1 or width * height < 2:
        raise InvalidParameterError(f"SlipperyGrid needs at least 2 cells, got {width}x{height}")
    if not 0.0 <= p_slip <= 1.0:
        raise InvalidParameterError(f"p_slip must lie in [0, 1], got {p_slip}")
    width, height = int(width), int(height)
    n = width * height
    goal = n - 1

    def move(s: int, d: int) -> int:
        x, y = s % width, s // width
        dx, dy = _MOVES[d]
        x = min(max(x + dx, 0), width - 1)
        y = min(max(y + dy, 0), height - 1)
        return y * width + x

    rows = []
    for s in range(n):
        if s == goal:
            rows.append(_absorbing(s, 4))
            continue
        actions = []
        for a in range(4):
            probs: dict[int, float] = {}
            for d in range(4):
                p = p_slip / 4.0 + (1.0 - p_slip if d == a else 0.0)
                if p > 0.0:
                    nxt = move(s, d)
                    probs[nxt] = probs.get(nxt, 0.0) + p
            actions.append(tuple(
                Outcome(nxt, p, 1.0 if nxt == goal else 0.0, nxt == goal)
                for nxt, p in sorted(probs.items())
            ))
        rows.append(tuple(actions))
    return EnvironmentSpec(n, 4, tuple(rows), 0, frozenset({goal}), name="SlipperyGrid")


def make_env(name: str, **params) -> EnvironmentSpec:
    """Build a named environment family.

    >>> make_env("TrapChain", n=4, r_trap=0.1).transition[0][LEFT]
    (Outcome(next_state=0, probability=1.0, reward=0.1, terminal=True),)
    """
    if name == "DelayedChain":
        return delayed_chain(params.get("n", 5))
    if name == "TrapChain":
        return trap_chain(params.get("n", 10), params.get("r_trap", 0.1))
    if name == "SlipperyGrid":
        return slippery_grid(params.get("width", 3), params.get("height", 3), params.get("p_slip", 0.2))
    raise InvalidParameterError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")


def env_step(spec: EnvironmentSpec, state: int, action: int, rng: np.random.Generator) -> tuple[int, float, bool]:
    """Sample one transition. Single-outcome rows consume no randomness."""
    if state in spec.terminal_states:
        raise ContractViolation(f"cannot step from terminal state {state}")
    outcomes = spec.transition[state][action]
    if len(outcomes) == 1:
        o = outcomes[0]
    else:
        cum = spec._cum[state][action]
        idx = int(np.searchsorted(cum, rng.random(), side="right"))
        o = outcomes[min(idx, len(outcomes) - 1)]
    return o.next_state, o.reward, o.terminal


def encode(state: int, n_states: int) -> np.ndarray:
    if not 0 <= state < n_states:
        raise IndexError(f"state {state} out of range for {n_states} states")
    v = np.zeros(n_states)
    v[state] = 1.0
    return v


def encode_batch(states: Sequence[int] | np.ndarray, n_states: int) -> np.ndarray:
    """Rows of one-hot vectors, shape (len(states), n_states)."""
    states = np.asarray(states, dtype=np.intp)
    if states.size and (states.min() < 0 or states.max() >= n_states):
        raise IndexError("state index out of range")
    out = np.zeros((states.size, n_states))
    out[np.arange(states.size), states] = 1.0
    return out
