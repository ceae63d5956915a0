"""Bellman optimality operator and exact value iteration on tabular specs.

Q-tables are plain ``(n_states, n_actions)`` float arrays; value tables are
``(n_states,)`` arrays. Rows of terminal states are identically zero and a
transition flagged terminal drops the bootstrap term.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .mdp import EnvironmentSpec


class ConvergenceError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def model_arrays(spec: EnvironmentSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(R, P_cont, terminal_mask)``.

    ``R[s, a]`` is the expected immediate reward and ``P_cont[s, a, s']`` the
    probability of reaching ``s'`` through a non-terminal outcome.
    """
    n, m = spec.n_states, spec.n_actions
    R = np.zeros((n, m))
    P = np.zeros((n, m, n))
    for s in spec.non_terminal_states:
        for a in range(m):
            for o in spec.transition[s][a]:
                R[s, a] += o.probability * o.reward
                if not o.terminal:
                    P[s, a, o.next_state] += o.probability
    mask = np.zeros(n, dtype=bool)
    mask[list(spec.terminal_states)] = True
    for arr in (R, P, mask):
        arr.setflags(write=False)
    return R, P, mask


def bellman_backup(q: np.ndarray, spec: EnvironmentSpec, gamma: float) -> np.ndarray:
    """One synchronous application of the optimality operator to ``q``."""
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.n_states, spec.n_actions):
        raise ValueError(f"Q-table shape {q.shape} does not match spec ({spec.n_states}, {spec.n_actions})")
    R, P, mask = model_arrays(spec)
    v = q.max(axis=1)
    out = R + gamma * (P @ v)
    out[mask] = 0.0
    return out


def iteration_cap(gamma: float, tol: float, r_max: float) -> int:
    if gamma == 0.0 or r_max == 0.0:
        return 2
    return max(2, math.ceil(math.log(tol * (1.0 - gamma) / r_max) / math.log(gamma)) + 1)


def solve(spec: EnvironmentSpec, gamma: float, tol: float = 1e-10) -> np.ndarray:
    """Value iteration from the zero table until ``||HQ - Q||_inf <= tol``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1) for a contraction, got {gamma}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    R, _, _ = model_arrays(spec)
    cap = iteration_cap(gamma, tol, float(np.abs(R).max()))
    q = np.zeros((spec.n_states, spec.n_actions))
    for _ in range(cap + 1):
        hq = bellman_backup(q, spec, gamma)
        if np.max(np.abs(hq - q)) <= tol:
            return q
        q = hq
    raise ConvergenceError(f"value iteration did not reach tol={tol} within {cap} sweeps")


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Greedy action per state; ``np.argmax`` already breaks ties to the lowest index."""
    return np.argmax(np.asarray(q), axis=1)


def state_values(q: np.ndarray) -> np.ndarray:
    return np.asarray(q).max(axis=1)
