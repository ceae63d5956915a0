"""Command line entry point.

    dqnsched train CONFIG
    dqnsched compare CONFIG_A CONFIG_B --seeds N [--out PATH]
    dqnsched oracle --env NAME --gamma G [--n N --r-trap R --width W --height H --p-slip P]
    dqnsched eval CHECKPOINT CONFIG

Exit status: 0 on success, 1 for configuration errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import ConfigError, EnvConfig, load_config
from .exact_dp import greedy_policy, solve, state_values
from .harness import compare, evaluate_policy, format_value, gamma_eval_for, oracle_gap, run_experiment
from .mdp import ENV_NAMES, InvalidParameterError
from .network import load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _train(args) -> int:
    cfg = load_config(args.config)
    metrics = run_experiment(cfg)
    if not cfg.run.out_path:
        sys.stdout.write(metrics.to_csv())
    return EXIT_OK


def _compare(args) -> int:
    cfg_a, cfg_b = load_config(args.config_a), load_config(args.config_b)
    report = compare(cfg_a, cfg_b, args.seeds, out_path=args.out, workers=args.workers)
    print("\n".join(report.summary_lines()))
    return EXIT_OK


def _oracle(args) -> int:
    env_cfg = EnvConfig(name=args.env, n=args.n, r_trap=args.r_trap, width=args.width,
                        height=args.height, p_slip=args.p_slip)
    spec = env_cfg.build()
    if not 0.0 <= args.gamma < 1.0:
        raise ConfigError(f"--gamma must lie in [0, 1), got {args.gamma}")
    q = solve(spec, args.gamma, args.tol)
    v, pi = state_values(q), greedy_policy(q)
    print(",".join(["state"] + [f"q_{a}" for a in range(spec.n_actions)] + ["v", "greedy_action"]))
    for s in range(spec.n_states):
        print(",".join([str(s)] + [format_value(x) for x in q[s]] + [format_value(v[s]), str(int(pi[s]))]))
    return EXIT_OK


def _eval(args) -> int:
    cfg = load_config(args.config)
    params = load_checkpoint(args.checkpoint)
    spec = cfg.env.build()
    if params.layer_sizes[0] != spec.n_states or params.layer_sizes[-1] != spec.n_actions:
        raise ConfigError("checkpoint dimensions do not match the configured environment")
    rng = np.random.default_rng(cfg.run.seed)
    mean, avg_q = evaluate_policy(params, spec, cfg.schedule.eps_test, cfg.run.eval_steps, rng,
                                  cfg.env.resolved_horizon(spec))
    gap = oracle_gap(params, spec, gamma_eval_for(cfg))
    print("eval_return_mean,avg_max_q,oracle_gap")
    print(f"{format_value(mean)},{format_value(avg_q)},{format_value(gap)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqnsched", description="DQN with discount, learning-rate and exploration schedules")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment and write its per-epoch CSV")
    p.add_argument("config")
    p.set_defaults(func=_train)

    p = sub.add_parser("compare", help="run two configs over several seeds")
    p.add_argument("config_a")
    p.add_argument("config_b")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=None, help="combined per-epoch CSV")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.set_defaults(func=_compare)

    p = sub.add_parser("oracle", help="print Q*, V* and the greedy policy as CSV")
    p.add_argument("--env", required=True, choices=ENV_NAMES)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    defaults = EnvConfig()
    p.add_argument("--n", type=int, default=defaults.n)
    p.add_argument("--r-trap", type=float, default=defaults.r_trap)
    p.add_argument("--width", type=int, default=defaults.width)
    p.add_argument("--height", type=int, default=defaults.height)
    p.add_argument("--p-slip", type=float, default=defaults.p_slip)
    p.set_defaults(func=_oracle)

    p = sub.add_parser("eval", help="evaluate a saved network")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.set_defaults(func=_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure after validation is a runtime error
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
