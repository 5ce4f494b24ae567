"""Pilot runs that calibrate the learning acceptance thresholds.

Trains pendulum at d=1 with the desk-scale defaults over the acceptance
seeds, then reports the quantities the learning criterion checks:
first-10% mean, final-10% mean, pooled evaluation std, and the improvement
margin in multiples of that std.  Results are recorded in
results/pilot_pendulum.md.
"""

import argparse
import os
import sys

import numpy as np

from acerac.harness import ExperimentConfig, final_window_mean, read_csv, run


def window_stats(rows, fraction=0.1):
    k = max(1, int(np.ceil(len(rows) * fraction)))
    first = rows[:k]
    last = rows[-k:]
    pooled = np.sqrt(np.mean([r[2] ** 2 for r in first + last]))
    return (float(np.mean([r[1] for r in first])),
            float(np.mean([r[1] for r in last])), float(pooled))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/pilot_pendulum_d1")
    args = ap.parse_args()

    cfg = ExperimentConfig(env_id="pendulum", d=1, total_steps=args.steps,
                           seeds=tuple(args.seeds), out_dir=args.out)
    run(cfg)

    print(f"\n{'seed':>4} {'first10%':>10} {'final10%':>10} "
          f"{'pooled_std':>10} {'margin/std':>10}")
    passing = 0
    for seed in args.seeds:
        rows = read_csv(os.path.join(args.out, f"seed_{seed}.csv"))
        first, last, pooled = window_stats(rows)
        margin = (last - first) / max(pooled, 1e-9)
        passing += margin >= 5.0
        print(f"{seed:>4} {first:>10.1f} {last:>10.1f} {pooled:>10.1f} "
              f"{margin:>10.2f}")
    print(f"\nseeds with margin >= 5x pooled std: {passing}/{len(args.seeds)}")
    return 0 if passing >= 4 else 1


if __name__ == "__main__":
    sys.exit(main())
