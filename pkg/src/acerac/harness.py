"""Experiment runner: interleaved training and frozen-weight evaluation,
discretization-scaled hyperparameters, multi-seed sweeps, CSV outputs.

A run directory holds one CSV per seed (env_steps, mean_test_return,
std_test_return), actor/critic checkpoints, the input config as a flat
key-value file, and manifest.json with the fully resolved configuration.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .ar_process import ArNoise
from .envs import make_env
from .kron_gauss import diagonal_kernel
from .nets import Mlp, save_params
from .policy import SequencePolicy
from .replay import ReplayBuffer, ReplayRecord
from .trainer import AlgoConfig, Trainer

CSV_HEADER = "env_steps,mean_test_return,std_test_return"


@dataclass
class ExperimentConfig:
    """Base-rate configuration; resolve() applies the discretization scalings.

    alpha and n default to the scaling rules 0.5^(1/d) and 2*d; explicit
    values are taken literally.  white_noise forces alpha=0, n=1.
    """

    env_id: str = "pendulum"
    d: int = 1
    total_steps: int = 200_000
    eval_interval: int = 5_000
    eval_episodes: int = 5
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str = "runs/run"
    white_noise: bool = False
    gamma: float = 0.99
    alpha: float | None = None
    n: int | None = None
    sigma: float = 0.3
    b: float = 2.0
    actor_lr: float = 7e-4
    critic_lr: float = 3e-3
    minibatch_size: int = 32
    gradient_steps: int = 1
    learning_start: int = 1_000
    penalty_weight: float = 1.0
    buffer_capacity: int = 100_000
    hidden: tuple = (64, 64)
    save_buffer: bool = False


@dataclass(frozen=True)
class ResolvedConfig:
    """Concrete per-run values after applying the d-scalings: steps, eval
    cadence, learning start, and buffer capacity multiply by d; gamma maps
    to gamma^(1/d); one update happens every d environment steps."""

    env_id: str
    d: int
    variant: str
    steps: int
    eval_interval: int
    eval_episodes: int
    seeds: tuple
    out_dir: str
    gamma: float
    alpha: float
    n: int
    sigma: float
    b: float
    actor_lr: float
    critic_lr: float
    minibatch_size: int
    gradient_steps: int
    learning_start: int
    penalty_weight: float
    buffer_capacity: int
    hidden: tuple
    update_period: int
    save_buffer: bool


def resolve(cfg: ExperimentConfig) -> ResolvedConfig:
    d = cfg.d
    if d < 1:
        raise ValueError("config field d: discretization factor must be >= 1")
    positive = ("total_steps", "eval_interval", "eval_episodes",
                "minibatch_size", "gradient_steps", "buffer_capacity", "sigma",
                "actor_lr", "critic_lr")
    for name in positive:
        if getattr(cfg, name) <= 0:
            raise ValueError(f"config field {name}: must be positive")
    if cfg.learning_start < 0:
        raise ValueError("config field learning_start: must be >= 0")
    if not cfg.seeds:
        raise ValueError("config field seeds: at least one seed required")
    if cfg.white_noise:
        alpha, n = 0.0, 1
    else:
        alpha = cfg.alpha if cfg.alpha is not None else 0.5 ** (1.0 / d)
        n = cfg.n if cfg.n is not None else 2 * d
    return ResolvedConfig(
        env_id=cfg.env_id,
        d=d,
        variant="white_noise" if cfg.white_noise else "acerac",
        steps=cfg.total_steps * d,
        eval_interval=cfg.eval_interval * d,
        eval_episodes=cfg.eval_episodes,
        seeds=tuple(cfg.seeds),
        out_dir=cfg.out_dir,
        gamma=cfg.gamma ** (1.0 / d),
        alpha=alpha,
        n=n,
        sigma=cfg.sigma,
        b=cfg.b,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        minibatch_size=cfg.minibatch_size,
        gradient_steps=cfg.gradient_steps,
        learning_start=cfg.learning_start * d,
        penalty_weight=cfg.penalty_weight,
        buffer_capacity=cfg.buffer_capacity * d,
        hidden=tuple(cfg.hidden),
        update_period=d,
        save_buffer=cfg.save_buffer,
    )


def algo_config(rc: ResolvedConfig) -> AlgoConfig:
    return AlgoConfig(
        n=rc.n, alpha=rc.alpha, sigma=rc.sigma, gamma=rc.gamma, b=rc.b,
        actor_lr=rc.actor_lr, critic_lr=rc.critic_lr,
        gradient_steps=rc.gradient_steps, learning_start=rc.learning_start,
        penalty_weight=rc.penalty_weight, minibatch_size=rc.minibatch_size,
    )


# ----------------------------------------------------------------- evaluation

def evaluate(actor: Mlp, theta, env, episodes: int, rng) -> tuple[float, float]:
    """Mean and std of episodic returns of the deterministic policy
    (exploration off: the action is the clipped actor output)."""
    returns = np.empty(episodes)
    bound = env.action_bound
    for e in range(episodes):
        s = env.reset(rng)
        total = 0.0
        for t in range(env.episode_steps):
            a = np.clip(actor.forward(theta, s), -bound, bound)
            s, r, terminal, truncated = env.step(s, a, t)
            total += r
            if terminal or truncated:
                break
        returns[e] = total
    return float(returns.mean()), float(returns.std())


# ------------------------------------------------------------------ training

def run_seed(rc: ResolvedConfig, seed: int):
    """One training run; returns (csv_rows, theta, nu, status, trainer)."""
    streams = np.random.SeedSequence(seed).spawn(5)
    rng_init, rng_env, rng_noise, rng_batch, ss_eval = (
        np.random.default_rng(streams[0]), np.random.default_rng(streams[1]),
        np.random.default_rng(streams[2]), np.random.default_rng(streams[3]),
        streams[4],
    )

    env = make_env(rc.env_id, rc.d)
    actor = Mlp([env.state_dim, *rc.hidden, env.action_dim])
    critic = Mlp([env.action_dim + env.state_dim, *rc.hidden, 1])
    theta = actor.init_params(rng_init)
    nu = critic.init_params(rng_init)
    kernel = diagonal_kernel(rc.sigma, env.action_dim)
    policy = SequencePolicy(actor, env.action_bound, rc.n, rc.alpha, kernel)
    noise = ArNoise(rc.alpha, kernel)
    buffer = ReplayBuffer(rc.buffer_capacity, env.state_dim, env.action_dim, rc.n)
    trainer = Trainer(policy, critic, algo_config(rc), theta, nu)

    def run_eval():
        rng = np.random.default_rng(ss_eval.spawn(1)[0])
        return evaluate(actor, trainer.theta, env, rc.eval_episodes, rng)

    rows = []
    status = "ok"
    try:
        rows.append((0, *run_eval()))
        s = env.reset(rng_env)
        noise.reset(rng_noise)
        xi_prev = None
        ep_t = 0
        for t in range(rc.steps):
            if ep_t > 0:
                noise.step(rng_noise)
            out = policy.act(s, noise.xi, trainer.theta)
            logp = policy.step_log_density(noise.xi, xi_prev)
            next_s, r, terminal, truncated = env.step(s, out.action, ep_t)
            buffer.push(ReplayRecord(
                s=s, a_raw=out.raw_action, r=r, mean=out.mean,
                log_cond_density=logp, next_s=next_s,
                episode_start=ep_t == 0, terminal=terminal, truncated=truncated,
            ))
            xi_prev = noise.xi
            ep_t += 1
            if terminal or truncated:
                s = env.reset(rng_env)
                noise.reset(rng_noise)
                xi_prev = None
                ep_t = 0
            else:
                s = next_s
            done = t + 1
            if done >= rc.learning_start and done % rc.update_period == 0:
                trainer.train_step(buffer, rng_batch)
            if done % rc.eval_interval == 0:
                rows.append((done, *run_eval()))
    except FloatingPointError:
        status = "failed"
    return rows, trainer.theta, trainer.nu, status, trainer, buffer


def _write_csv(path, rows):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for step, mean, std in rows:
            fh.write(f"{step},{mean:.12g},{std:.12g}\n")


def run(cfg: ExperimentConfig, log=print) -> dict:
    """Full experiment over cfg.seeds; returns the manifest dict."""
    rc = resolve(cfg)
    os.makedirs(rc.out_dir, exist_ok=True)
    write_config_file(os.path.join(rc.out_dir, "config.txt"), cfg)
    seeds_out = {}
    for seed in rc.seeds:
        rows, theta, nu, status, trainer, buffer = run_seed(rc, seed)
        csv_name = f"seed_{seed}.csv"
        actor_name = f"actor_seed{seed}.ckpt"
        critic_name = f"critic_seed{seed}.ckpt"
        _write_csv(os.path.join(rc.out_dir, csv_name), rows)
        save_params(os.path.join(rc.out_dir, actor_name), trainer.policy.actor, theta)
        save_params(os.path.join(rc.out_dir, critic_name), trainer.critic, nu)
        if rc.save_buffer:
            buffer.save(os.path.join(rc.out_dir, f"buffer_seed{seed}.bin"))
        seeds_out[str(seed)] = {
            "status": status,
            "csv": csv_name,
            "actor": actor_name,
            "critic": critic_name,
            "final_mean_return": rows[-1][1] if rows else None,
            "skipped_updates": trainer.skipped_updates,
        }
        if rows:
            log(f"seed {seed}: {status}, final eval {rows[-1][1]:.2f} "
                f"(+-{rows[-1][2]:.2f}) at {rows[-1][0]} steps")
        else:
            log(f"seed {seed}: {status} before the first evaluation")
    manifest = {
        "version": __version__,
        "config": dataclasses.asdict(rc),
        "seeds": seeds_out,
    }
    with open(os.path.join(rc.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# ------------------------------------------------------------------- compare

def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = []
        for line in fh:
            step, mean, std = line.strip().split(",")
            rows.append((int(step), float(mean), float(std)))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def final_window_mean(rows, fraction: float = 0.1) -> float:
    """Mean test return over the last `fraction` of evaluations (>= 1 row)."""
    k = max(1, math.ceil(len(rows) * fraction))
    return float(np.mean([r[1] for r in rows[-k:]]))


def compare(run_dirs, fraction: float = 0.1):
    """Aggregate final-window mean returns per (env, d, variant).

    Returns (rows sorted by final mean, problems); unreadable runs are
    reported and excluded.
    """
    groups: dict[tuple, list] = {}
    problems = []
    for run_dir in run_dirs:
        manifest_path = os.path.join(run_dir, "manifest.json")
        try:
            with open(manifest_path) as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            problems.append(f"{manifest_path}: {exc}")
            continue
        rc = manifest["config"]
        key = (rc["env_id"], rc["d"], rc["variant"])
        for seed, info in sorted(manifest["seeds"].items()):
            csv_path = os.path.join(run_dir, info["csv"])
            try:
                rows = read_csv(csv_path)
            except (OSError, ValueError) as exc:
                problems.append(f"{csv_path}: {exc}")
                continue
            groups.setdefault(key, []).append(final_window_mean(rows, fraction))
    out = []
    for (env_id, d, variant), finals in groups.items():
        arr = np.asarray(finals)
        out.append({
            "env": env_id, "d": d, "variant": variant, "runs": len(finals),
            "final_mean": float(arr.mean()), "final_std": float(arr.std()),
        })
    out.sort(key=lambda row: -row["final_mean"])
    return out, problems


def format_compare_table(rows) -> str:
    header = f"{'env':<12} {'d':>3} {'variant':<12} {'runs':>4} {'final_mean':>14} {'final_std':>12}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['env']:<12} {r['d']:>3} {r['variant']:<12} "
                     f"{r['runs']:>4} {r['final_mean']:>14.3f} {r['final_std']:>12.3f}")
    return "\n".join(lines)


def write_compare_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("env,d,variant,runs,final_mean,final_std\n")
        for r in rows:
            fh.write(f"{r['env']},{r['d']},{r['variant']},{r['runs']},"
                     f"{r['final_mean']:.12g},{r['final_std']:.12g}\n")


# --------------------------------------------------------------- config file

def _field_types():
    return {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(name: str, text: str):
    text = text.strip()
    if name in ("seeds", "hidden"):
        return tuple(int(x) for x in text.split(",") if x.strip())
    if name in ("alpha", "n") and text.lower() == "none":
        return None
    if name in ("white_noise", "save_buffer"):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config field {name}: expected a boolean, got {text!r}")
    if name in ("env_id", "out_dir"):
        return text
    if name in ("d", "total_steps", "eval_interval", "eval_episodes",
                "minibatch_size", "gradient_steps", "learning_start",
                "buffer_capacity", "n"):
        return int(text)
    return float(text)


def read_config_file(path) -> dict:
    """Flat `key = value` file; unknown keys are an error naming the key."""
    known = _field_types()
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config field {key!r}")
            values[key] = _parse_value(key, text)
    return values


def write_config_file(path, cfg: ExperimentConfig):
    with open(path, "w") as fh:
        for f in dataclasses.fields(ExperimentConfig):
            value = getattr(cfg, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            fh.write(f"{f.name} = {value}\n")
