"""Experiment configuration and its flat ``section.key = value`` file format.

Blank lines and ``#`` comments are ignored. Unknown keys are errors. The value
``none`` clears optional keys (``schedule.gamma_cap``, ``agent.clip``,
``agent.learn_every``, ``run.score_threshold`` ...). ``agent.hidden_sizes`` is a
comma-separated list; leave it empty for a single linear layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .agent import AgentConfig
from .mdp import ENV_NAMES, EnvironmentSpec, make_env
from .schedules import ScheduleConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    name: str = "DelayedChain"
    n: int = 8
    r_trap: float = 0.1
    width: int = 3
    height: int = 3
    p_slip: float = 0.2
    horizon: int | None = None  # None -> 10 * n_states

    def build(self) -> EnvironmentSpec:
        if self.name not in ENV_NAMES:
            raise ConfigError(f"unknown environment {self.name!r}")
        if self.name == "SlipperyGrid":
            return make_env(self.name, width=self.width, height=self.height, p_slip=self.p_slip)
        if self.name == "TrapChain":
            return make_env(self.name, n=self.n, r_trap=self.r_trap)
        return make_env(self.name, n=self.n)

    def resolved_horizon(self, spec: EnvironmentSpec) -> int:
        return self.horizon if self.horizon is not None else 10 * spec.n_states


@dataclass(frozen=True)
class RunConfig:
    epochs: int = 50
    steps_per_epoch: int = 2000
    eval_steps: int = 1000
    seed: int = 0
    out_path: str | None = None
    score_threshold: float | None = None  # None -> environment's optimal episode score
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.steps_per_epoch < 1 or self.eval_steps < 1:
            raise ConfigError("run.epochs must be >= 0, steps_per_epoch and eval_steps positive")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """``cfg.with_overrides(run={"seed": 3}, schedule={"gamma0": 0.8})``"""
        updated = {name: replace(getattr(self, name), **values) for name, values in sections.items()}
        return replace(self, **updated)


def _none(parse):
    def inner(text: str):
        return None if text.lower() in ("none", "") else parse(text)
    return inner


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not a valid setting")
    return value


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(_int(p) for p in text.split(",") if p.strip())


def _learn_every(text: str):
    return None if text.lower() in ("none", "inf", "infinity") else _int(text)


# config key -> (section attribute, field name, parser)
KEYS = {
    "env.name": ("env", "name", str),
    "env.n": ("env", "n", _int),
    "env.r_trap": ("env", "r_trap", _float),
    "env.width": ("env", "width", _int),
    "env.height": ("env", "height", _int),
    "env.p_slip": ("env", "p_slip", _float),
    "env.horizon": ("env", "horizon", _none(_int)),
    "agent.hidden_sizes": ("agent", "hidden_sizes", _int_list),
    "agent.capacity": ("agent", "capacity", _int),
    "agent.batch_size": ("agent", "batch_size", _int),
    "agent.C": ("agent", "target_sync", _int),
    "agent.learn_every": ("agent", "learn_every", _learn_every),
    "agent.warmup": ("agent", "warmup", _int),
    "agent.clip": ("agent", "clip", _none(_float)),
    "agent.optimizer": ("agent", "optimizer", str.lower),
    "agent.rms_decay": ("agent", "rms_decay", _float),
    "agent.rms_eps": ("agent", "rms_eps", _float),
    "schedule.gamma0": ("schedule", "gamma0", _float),
    "schedule.gamma_factor": ("schedule", "gamma_factor", _float),
    "schedule.gamma_cap": ("schedule", "gamma_cap", _none(_float)),
    "schedule.alpha0": ("schedule", "alpha0", _float),
    "schedule.alpha_factor": ("schedule", "alpha_factor", _float),
    "schedule.eps_train0": ("schedule", "eps_train0", _float),
    "schedule.eps_test": ("schedule", "eps_test", _float),
    "schedule.adaptive_eps": ("schedule", "adaptive_eps", _bool),
    "schedule.W": ("schedule", "stagnation_window", _int),
    "schedule.delta": ("schedule", "stagnation_delta", _float),
    "schedule.rho": ("schedule", "eps_boost", _float),
    "schedule.eps_min": ("schedule", "eps_min", _float),
    "schedule.eps_max": ("schedule", "eps_max", _float),
    "run.epochs": ("run", "epochs", _int),
    "run.steps_per_epoch": ("run", "steps_per_epoch", _int),
    "run.eval_steps": ("run", "eval_steps", _int),
    "run.seed": ("run", "seed", _int),
    "run.out_path": ("run", "out_path", _none(str)),
    "run.score_threshold": ("run", "score_threshold", _none(_float)),
    "run.checkpoint_path": ("run", "checkpoint_path", _none(str)),
}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    sections: dict[str, dict] = {"env": {}, "agent": {}, "schedule": {}, "run": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        section, name, parse = KEYS[key]
        try:
            sections[section][name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    try:
        cfg = ExperimentConfig(
            env=EnvConfig(**sections["env"]),
            agent=AgentConfig(**sections["agent"]),
            schedule=ScheduleConfig(**sections["schedule"]),
            run=RunConfig(**sections["run"]),
        )
        cfg.env.build()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Render every key, so that ``parse_config(dump_config(cfg)) == cfg``."""
    lines = []
    for key, (section, name, _) in KEYS.items():
        value = getattr(getattr(cfg, section), name)
        if value is None:
            text = "none"
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value).lower() if isinstance(value, bool) else str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"

