"""Epoch-structured experiment runner.

Each epoch trains for ``steps_per_epoch`` steps at fixed (gamma, alpha, eps),
evaluates the greedy-ish policy at ``eps_test``, measures overestimation
against the exact solution, and then lets the schedule controller tick.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .agent import Agent, make_agent, select_action
from .config import ConfigError, ExperimentConfig
from .exact_dp import solve, state_values
from .mdp import EnvironmentSpec, env_step
from .network import NetworkParams, forward, save_checkpoint
from .schedules import ScheduleState, controller_epoch_update

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "epoch", "steps", "gamma", "alpha", "epsilon", "train_return_mean",
    "eval_return_mean", "eval_return_best", "avg_max_q", "oracle_gap",
)
DEFAULT_GAMMA_EVAL = 0.99


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    gamma: float
    alpha: float
    epsilon: float
    train_return_mean: float | None
    eval_return_mean: float | None
    eval_return_best: float | None
    avg_max_q: float | None
    oracle_gap: float | None

    def row(self) -> list[str]:
        return [format_value(getattr(self, c)) for c in CSV_COLUMNS]


@dataclass
class RunMetrics:
    records: list[EpochRecord] = field(default_factory=list)
    params: NetworkParams | None = None
    steps_per_epoch: int = 0

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def best_score(self) -> float | None:
        return self.records[-1].eval_return_best if self.records else None

    def steps_to_threshold(self, threshold: float) -> int | None:
        """Training steps at the first epoch whose evaluation mean reaches ``threshold``."""
        for r in self.records:
            if r.eval_return_mean is not None and r.eval_return_mean >= threshold:
                return r.steps
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            writer.writerow(r.row())
        return buf.getvalue()


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.10g}"


def evaluate_policy(params: NetworkParams, env: EnvironmentSpec, eps_test: float, steps: int,
                    rng: np.random.Generator, horizon: int | None = None) -> tuple[float | None, float]:
    """Run ``eps_test``-greedy episodes for ``steps`` environment steps.

    Returns the mean undiscounted score of completed episodes (``None`` when no
    episode finished; the trailing partial episode is always dropped) and the
    mean of ``max_a Q(s, a)`` over every visited state.
    """
    horizon = horizon if horizon is not None else 10 * env.n_states
    q_table = forward(params, np.eye(env.n_states))
    v_table = q_table.max(axis=1)
    returns = []
    v_sum = 0.0
    s, ep_ret, ep_len = env.start_state, 0.0, 0
    for _ in range(steps):
        v_sum += v_table[s]
        a = select_action(q_table[s], eps_test, rng)
        s2, r, terminal = env_step(env, s, a, rng)
        ep_ret += r
        ep_len += 1
        if terminal or ep_len >= horizon:
            returns.append(ep_ret)
            s, ep_ret, ep_len = env.start_state, 0.0, 0
        else:
            s = s2
    mean_return = float(np.mean(returns)) if returns else None
    return mean_return, v_sum / steps if steps else 0.0


@lru_cache(maxsize=32)
def _optimal_values(spec: EnvironmentSpec, gamma: float) -> np.ndarray:
    v = state_values(solve(spec, gamma, 1e-10))
    v.setflags(write=False)
    return v


def oracle_gap(params: NetworkParams, spec: EnvironmentSpec, gamma_eval: float = DEFAULT_GAMMA_EVAL) -> float:
    """Mean over non-terminal states of ``max_a Q(s, a; theta) - V*(s)``; positive means overestimation."""
    states = spec.non_terminal_states
    v_star = _optimal_values(spec, gamma_eval)[states]
    v_net = forward(params, np.eye(spec.n_states)[states]).max(axis=1)
    return float(np.mean(v_net - v_star))


def relative_improvement(baseline: float, treatment: float) -> float:
    if not baseline > 0:
        raise ValueError(f"baseline must be positive, got {baseline}")
    return (treatment - baseline) / baseline


def gamma_eval_for(cfg: ExperimentConfig) -> float:
    cap = cfg.schedule.gamma_cap
    return cap if cap is not None else DEFAULT_GAMMA_EVAL


def _mean_or_none(values) -> float | None:
    return float(np.mean(values)) if values else None


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunMetrics:
    """Train/evaluate/tick for ``run.epochs`` epochs. Deterministic in ``run.seed``."""
    spec = cfg.env.build()
    horizon = cfg.env.resolved_horizon(spec)
    agent_seq, eval_seq = np.random.SeedSequence(cfg.run.seed).spawn(2)
    hyper = ScheduleState.initial(cfg.schedule)
    agent = make_agent(spec, cfg.agent, hyper, int(agent_seq.generate_state(1)[0]), horizon)
    eval_rng = np.random.default_rng(eval_seq)
    gamma_eval = gamma_eval_for(cfg)

    metrics = RunMetrics(steps_per_epoch=cfg.run.steps_per_epoch)
    best = None
    for epoch in range(1, cfg.run.epochs + 1):
        train_returns = _train_epoch(agent, cfg.run.steps_per_epoch)
        eval_mean, avg_max_q = evaluate_policy(
            agent.params, spec, cfg.schedule.eps_test, cfg.run.eval_steps, eval_rng, horizon)
        if eval_mean is not None:
            best = eval_mean if best is None else max(best, eval_mean)
        record = EpochRecord(
            epoch=epoch,
            steps=epoch * cfg.run.steps_per_epoch,
            gamma=hyper.gamma,
            alpha=hyper.alpha,
            epsilon=hyper.epsilon,
            train_return_mean=_mean_or_none(train_returns),
            eval_return_mean=eval_mean,
            eval_return_best=best,
            avg_max_q=avg_max_q,
            oracle_gap=oracle_gap(agent.params, spec, gamma_eval),
        )
        metrics.records.append(record)
        log.debug("epoch %d gamma=%.6f eval=%s gap=%.4f", epoch, hyper.gamma, eval_mean, record.oracle_gap)
        hyper = controller_epoch_update(hyper, eval_mean)
        agent.hyper = hyper
    metrics.params = agent.params

    if write and cfg.run.out_path:
        write_text(cfg.run.out_path, metrics.to_csv())
    if write and cfg.run.checkpoint_path:
        save_checkpoint(agent.params, cfg.run.checkpoint_path)
    return metrics


def _train_epoch(agent: Agent, steps: int) -> list[float]:
    returns = []
    for _ in range(steps):
        step = agent.train_step()
        if step.episode_return is not None:
            returns.append(step.episode_return)
    return returns


def write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


@dataclass
class ComparisonReport:
    labels: tuple[str, str]
    seeds: list[int]
    threshold: float
    best_scores: dict[str, list[float | None]]
    steps_to_threshold: dict[str, list[int | None]]
    metrics: dict[str, list[RunMetrics]]

    def median_best(self, label: str) -> float | None:
        vals = [v for v in self.best_scores[label] if v is not None]
        return statistics.median(vals) if vals else None

    def median_steps(self, label: str) -> float:
        """Median steps-to-threshold; runs that never reach it count as infinite."""
        vals = [math.inf if v is None else v for v in self.steps_to_threshold[label]]
        return statistics.median(vals)

    def relative_improvement(self) -> float | None:
        base, treat = (self.median_best(l) for l in self.labels)
        if base is None or treat is None or base <= 0:
            return None
        return relative_improvement(base, treat)

    def summary_lines(self) -> list[str]:
        lines = ["config,median_best,median_steps_to_threshold," + ",".join(f"seed{s}_best" for s in self.seeds)]
        for label in self.labels:
            per_seed = ",".join(format_value(v) for v in self.best_scores[label])
            steps = self.median_steps(label)
            lines.append(f"{label},{format_value(self.median_best(label))},"
                         f"{'' if math.isinf(steps) else format_value(steps)},{per_seed}")
        lines.append(f"relative_improvement,{format_value(self.relative_improvement())}")
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("config", "seed") + CSV_COLUMNS)
        for label in self.labels:
            for seed, m in zip(self.seeds, self.metrics[label]):
                for r in m.records:
                    writer.writerow([label, seed] + r.row())
        return buf.getvalue()


def _comparable(a: ExperimentConfig, b: ExperimentConfig) -> bool:
    strip = dict(seed=0, out_path=None, checkpoint_path=None)
    return a.env == b.env and replace(a.run, **strip) == replace(b.run, **strip)


def _run_quiet(cfg: ExperimentConfig) -> RunMetrics:
    return run_experiment(cfg, write=False)


def compare(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig, n_seeds: int, out_path=None,
            labels: tuple[str, str] = ("a", "b"), workers: int = 1) -> ComparisonReport:
    """Run both configs over seeds ``base .. base + n_seeds - 1`` (``base`` is ``cfg_a.run.seed``).

    ``cfg_b`` is treated as the treatment when computing the relative improvement.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be positive")
    if not _comparable(cfg_a, cfg_b):
        raise ConfigError("compared configs may differ only in schedule and agent settings")
    base = cfg_a.run.seed
    seeds = list(range(base, base + n_seeds))
    jobs = [cfg.with_overrides(run={"seed": s}) for cfg in (cfg_a, cfg_b) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_quiet, jobs))
    else:
        results = [_run_quiet(job) for job in jobs]

    spec = cfg_a.env.build()
    threshold = cfg_a.run.score_threshold if cfg_a.run.score_threshold is not None else spec.optimal_score
    metrics = {labels[0]: results[:n_seeds], labels[1]: results[n_seeds:]}
    report = ComparisonReport(
        labels=labels,
        seeds=seeds,
        threshold=threshold,
        best_scores={k: [m.best_score() for m in v] for k, v in metrics.items()},
        steps_to_threshold={k: [m.steps_to_threshold(threshold) for m in v] for k, v in metrics.items()},
        metrics=metrics,
    )
    if out_path:
        write_text(out_path, report.to_csv())
    return report
