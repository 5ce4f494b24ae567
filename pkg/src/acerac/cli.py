"""Command-line entry points: train, eval, compare."""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .envs import ENV_IDS, make_env
from .harness import (
    ExperimentConfig,
    compare,
    format_compare_table,
    read_config_file,
    run,
    write_compare_csv,
)
from .nets import load_params


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acerac",
        description="Train and evaluate the autocorrelated-noise actor-critic "
                    "on desk-scale control tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="run a multi-seed training experiment")
    tr.add_argument("--config", help="flat key = value config file; flags override it")
    tr.add_argument("--env", dest="env_id", choices=ENV_IDS)
    tr.add_argument("--d", type=int, help="time-discretization factor (1, 3, 10, ...)")
    tr.add_argument("--seed", type=int, nargs="+", dest="seeds")
    tr.add_argument("--steps", type=int, dest="total_steps",
                    help="base-rate steps; the run executes steps * d")
    tr.add_argument("--eval-interval", type=int, dest="eval_interval",
                    help="base-rate steps between evaluations")
    tr.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    tr.add_argument("--alpha", type=float, help="noise autocorrelation; default 0.5^(1/d)")
    tr.add_argument("--n", type=int, help="look-ahead window length; default 2*d")
    tr.add_argument("--b", type=float, help="soft truncation bound")
    tr.add_argument("--sigma", type=float, help="action noise std dev")
    tr.add_argument("--gamma", type=float, help="base discount; the run uses gamma^(1/d)")
    tr.add_argument("--actor-lr", type=float, dest="actor_lr")
    tr.add_argument("--critic-lr", type=float, dest="critic_lr")
    tr.add_argument("--minibatch", type=int, dest="minibatch_size")
    tr.add_argument("--learning-start", type=int, dest="learning_start")
    tr.add_argument("--penalty-weight", type=float, dest="penalty_weight")
    tr.add_argument("--buffer", type=int, dest="buffer_capacity",
                    help="base-rate replay capacity, scaled by d")
    tr.add_argument("--white-noise", action="store_true", dest="white_noise",
                    default=None, help="ablation: alpha=0, n=1, all else equal")
    tr.add_argument("--out", dest="out_dir", help="output directory")

    ev = sub.add_parser("eval", help="evaluate a saved actor checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, default=5)
    ev.add_argument("--env", dest="env_id", choices=ENV_IDS, default="pendulum")
    ev.add_argument("--d", type=int, default=1)
    ev.add_argument("--seed", type=int, default=0)

    cp = sub.add_parser("compare", help="summarize finished run directories")
    cp.add_argument("dirs", nargs="+")
    cp.add_argument("--csv", help="also write the summary table as CSV")
    return parser


def _train(args) -> int:
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    field_names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for name, value in vars(args).items():
        if name in field_names and value is not None:
            values[name] = tuple(value) if name == "seeds" else value
    try:
        cfg = ExperimentConfig(**values)
        run(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _eval(args) -> int:
    from .harness import evaluate

    actor, theta = load_params(args.checkpoint)
    env = make_env(args.env_id, args.d)
    if actor.in_dim != env.state_dim or actor.out_dim != env.action_dim:
        print(f"error: checkpoint widths {actor.widths} do not fit "
              f"{args.env_id} (state {env.state_dim}, action {env.action_dim})",
              file=sys.stderr)
        return 2
    rng = np.random.default_rng(args.seed)
    mean, std = evaluate(actor, theta, env, args.episodes, rng)
    print(f"{args.env_id} d={args.d}: mean return {mean:.3f} +- {std:.3f} "
          f"over {args.episodes} episodes")
    return 0


def _compare(args) -> int:
    rows, problems = compare(args.dirs)
    for problem in problems:
        print(f"excluded: {problem}", file=sys.stderr)
    print(format_compare_table(rows))
    if args.csv:
        write_compare_csv(args.csv, rows)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "train":
        return _train(args)
    if args.command == "eval":
        return _eval(args)
    return _compare(args)


if __name__ == "__main__":
    sys.exit(main())
