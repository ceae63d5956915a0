"""Per-epoch hyperparameter rules for the discount factor, learning rate and
exploration rate, and the controller that ticks all three at epoch boundaries.

Discount: ``1 - gamma`` shrinks geometrically,
``gamma' = 1 - factor * (1 - gamma)``, optionally held at a cap once reached.
Learning rate: ``alpha' = factor * alpha``.
Exploration: when ``adaptive_eps`` is on, epsilon is multiplied by ``rho``
whenever evaluation scores have plateaued over the last ``W`` epochs and
divided by ``rho`` otherwise, within ``[eps_min, eps_max]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class ScheduleConfig:
    gamma0: float = 0.95
    gamma_factor: float = 0.98
    gamma_cap: float | None = 0.99
    alpha0: float = 0.005
    alpha_factor: float = 0.98
    eps_train0: float = 0.1
    eps_test: float = 0.05
    adaptive_eps: bool = False
    stagnation_window: int = 10
    stagnation_delta: float = 0.01
    eps_boost: float = 1.5
    eps_min: float = 0.05
    eps_max: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma0 < 1.0:
            raise ValueError(f"gamma0 must lie in [0, 1), got {self.gamma0}")
        if not 0.0 < self.gamma_factor <= 1.0:
            raise ValueError("gamma_factor must lie in (0, 1]")
        if self.gamma_cap is not None and not self.gamma0 <= self.gamma_cap < 1.0:
            raise ValueError("gamma_cap must lie in [gamma0, 1)")
        if not self.alpha0 > 0 or not 0.0 < self.alpha_factor <= 1.0:
            raise ValueError("alpha0 must be positive and alpha_factor in (0, 1]")
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ValueError("need 0 <= eps_min <= eps_max <= 1")
        if not 0.0 <= self.eps_train0 <= 1.0 or not 0.0 <= self.eps_test <= 1.0:
            raise ValueError("exploration rates must lie in [0, 1]")
        if self.adaptive_eps and not self.eps_min <= self.eps_train0 <= self.eps_max:
            raise ValueError("eps_train0 must lie in [eps_min, eps_max] when adaptive_eps is on")
        if self.stagnation_window < 1 or self.eps_boost <= 1.0 or self.stagnation_delta < 0:
            raise ValueError("need W >= 1, rho > 1, delta >= 0")


@dataclass(frozen=True)
class ScheduleState:
    gamma: float
    alpha: float
    epsilon: float
    epoch: int = 0
    eval_history: tuple[float, ...] = ()
    config: ScheduleConfig = field(default_factory=ScheduleConfig)

    @classmethod
    def initial(cls, config: ScheduleConfig) -> "ScheduleState":
        return cls(config.gamma0, config.alpha0, config.eps_train0, 0, (), config)


def next_gamma(gamma: float, factor: float, cap: float | None = None) -> float:
    g = 1.0 - factor * (1.0 - gamma)
    if cap is not None and g > cap:
        return cap
    return g


def gamma_at_epoch(gamma0: float, factor: float, k: int) -> float:
    """Closed form of ``k`` uncapped :func:`next_gamma` applications."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return 1.0 - factor**k * (1.0 - gamma0)


def next_alpha(alpha: float, factor: float) -> float:
    return factor * alpha


def is_stagnating(history, window: int, delta: float) -> bool:
    """True when the best of the last ``window`` scores fails to beat the earlier
    best by the relative margin ``delta``.

    Scores that are absent (NaN) are ignored. A history no longer than the
    window has nothing to compare against and never counts as stagnating.
    """
    if len(history) <= window:
        return False
    recent = [x for x in history[-window:] if not math.isnan(x)]
    prior = [x for x in history[:-window] if not math.isnan(x)]
    if not prior:
        return False
    if not recent:
        return True
    prior_best, recent_best = max(prior), max(recent)
    # `<=` covers the all-zero plateau, where a relative margin vanishes.
    return recent_best <= prior_best or recent_best < prior_best + delta * abs(prior_best)


def next_epsilon(state: ScheduleState) -> float:
    cfg = state.config
    if not cfg.adaptive_eps:
        return state.epsilon
    if is_stagnating(state.eval_history, cfg.stagnation_window, cfg.stagnation_delta):
        return min(cfg.eps_boost * state.epsilon, cfg.eps_max)
    return max(state.epsilon / cfg.eps_boost, cfg.eps_min)


def controller_epoch_update(state: ScheduleState, epoch_eval_score: float) -> ScheduleState:
    """Record the epoch's evaluation score, then tick gamma, alpha and epsilon."""
    cfg = state.config
    score = float("nan") if epoch_eval_score is None else float(epoch_eval_score)
    recorded = replace(state, eval_history=state.eval_history + (score,))
    return replace(
        recorded,
        gamma=next_gamma(state.gamma, cfg.gamma_factor, cfg.gamma_cap),
        alpha=next_alpha(state.alpha, cfg.alpha_factor),
        epsilon=next_epsilon(recorded),
        epoch=state.epoch + 1,
    )
