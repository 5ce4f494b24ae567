"""Training step: n-step temporal difference on the noise-value critic,
soft-truncated density ratio, and the actor/critic improvement directions,
applied with ADAM ascent.

The per-minibatch work is two batched forward passes (actor over all window
states, critic over all start/end evaluation points) followed by two batched
vector-Jacobian products, so update cost is a handful of matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kron_gauss import LOG_2PI, MAX_ALPHA
from .nets import AdamState, Mlp, adam_step
from .policy import SequencePolicy, SequenceWindow
from .replay import BufferNotReady, ReplayBuffer, WindowBatch

# exp() overflows past ~709; ratios this large saturate the truncation anyway
MAX_LOG_RATIO = 700.0


@dataclass(frozen=True)
class AlgoConfig:
    n: int
    alpha: float
    sigma: float = 0.3
    gamma: float = 0.99
    b: float = 2.0
    actor_lr: float = 1e-5
    critic_lr: float = 1e-4
    gradient_steps: int = 1
    learning_start: int = 1000
    penalty_weight: float = 1.0
    minibatch_size: int = 32

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= self.alpha < MAX_ALPHA:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.b <= 1.0:
            raise ValueError("truncation bound b must exceed 1")
        if self.minibatch_size < 1 or self.gradient_steps < 1:
            raise ValueError("minibatch_size and gradient_steps must be >= 1")


@dataclass
class UpdateDiagnostics:
    """Minibatch means of the update's scalar ingredients."""

    ready: bool = True
    skipped: bool = False
    td: float = np.nan
    rho: float = np.nan
    raw_ratio: float = np.nan
    critic_start: float = np.nan       # W(u_{j-1}, s_j)
    actor_grad_norm: float = np.nan
    critic_grad_norm: float = np.nan


def soft_truncate(x, b: float):
    """psi_b(x) = b * tanh(x / b): odd, monotone, slope 1 at 0, |result| < b."""
    if b <= 1.0:
        raise ValueError("truncation bound b must exceed 1")
    return b * np.tanh(np.asarray(x, dtype=float) / b)


def density_ratio(policy: SequencePolicy, w: SequenceWindow, theta,
                  b: float) -> tuple[float, float]:
    """(softly truncated ratio, raw ratio) of the window's density under
    theta to its stored behavior density.  Overflowing ratios saturate the
    truncation at b."""
    log_ratio = policy.seq_log_density(w, theta) - w.behavior_log_density
    raw = float(np.exp(min(log_ratio, MAX_LOG_RATIO)))
    return float(soft_truncate(raw, b)), raw


@dataclass
class _BatchResult:
    td: np.ndarray
    rho: np.ndarray
    raw: np.ndarray
    q_start: np.ndarray
    q_end: np.ndarray
    actor_direction: np.ndarray | None = None
    critic_direction: np.ndarray | None = None


def batch_update(policy: SequencePolicy, critic: Mlp,
                 batch: "WindowBatch | list", theta, nu,
                 cfg: AlgoConfig, want_directions: bool = True) -> _BatchResult:
    """Shared computation for a minibatch of windows; directions are the
    minibatch means of the per-window improvement directions."""
    if isinstance(batch, (list, tuple)):
        batch = WindowBatch.from_windows(batch)
    B = len(batch)
    n, adim = policy.n, policy.dim
    alpha, gamma = policy.alpha, cfg.gamma
    actor = policy.actor
    if batch.n != n:
        raise ValueError("window length does not match the configured n")

    states = batch.states                                   # (B, n, sdim)
    actions = batch.actions                                 # (B, n, adim)
    rewards = batch.rewards                                 # (B, n)
    next_states = batch.next_states
    behavior = batch.behavior_log_density
    initial = batch.initial
    terminal = batch.terminal
    mid_idx = np.flatnonzero(~initial)

    sdim = states.shape[2]
    rows = np.concatenate([
        states.reshape(B * n, sdim),
        next_states,
        batch.prev_states[mid_idx],
    ])
    out, a_cache = actor.forward_cached(theta, rows)
    a_win = out[:B * n].reshape(B, n, adim)
    a_next = out[B * n:B * n + B]
    a_prev = out[B * n + B:]

    xi_prev = np.zeros((B, adim))
    if mid_idx.size:
        xi_prev[mid_idx] = batch.prev_actions[mid_idx] - a_prev

    powers = alpha ** np.arange(1, n + 1)
    mean = a_win + powers[None, :, None] * xi_prev[:, None, :]
    resid = actions - mean

    weighted = np.empty_like(resid)
    log_det = np.empty(B)
    for gauss, mask in ((policy.stationary, initial), (policy.conditional, ~initial)):
        if mask.any():
            weighted[mask] = np.einsum(
                "ij,bjk,kl->bil", gauss.lag.inv, resid[mask], gauss.kernel.inv)
            log_det[mask] = gauss.log_det
    quad = np.einsum("bij,bij->b", resid, weighted)
    log_density = -0.5 * (n * adim * LOG_2PI + log_det + quad)

    raw = np.exp(np.minimum(log_density - behavior, MAX_LOG_RATIO))
    rho = soft_truncate(raw, cfg.b)

    xi_last = actions[:, -1] - a_win[:, -1]
    u_end = a_next + alpha * xi_last
    u_start = a_win[:, 0] + alpha * xi_prev
    if alpha > 0.0 and initial.any():
        # for an episode's first step the adjusted preceding noise is the
        # recorded action itself
        u_start[initial] = actions[initial, 0]

    q_rows = np.concatenate([
        np.concatenate([u_start, states[:, 0]], axis=1),
        np.concatenate([u_end, next_states], axis=1),
    ])
    q, c_cache = critic.forward_cached(nu, q_rows)
    q = q[:, 0]
    q_start, q_end = q[:B], q[B:]

    disc = gamma ** np.arange(n)
    boot = np.where(terminal, 0.0, gamma ** n * q_end)
    td = rewards @ disc + boot - q_start

    result = _BatchResult(td=td, rho=rho, raw=raw, q_start=q_start, q_end=q_end)
    if not want_directions:
        return result

    td_rho = td * rho
    cot = np.zeros((rows.shape[0], adim))
    cot[:B * n] = (weighted * td_rho[:, None, None]).reshape(B * n, adim)
    if mid_idx.size:
        # total-derivative path of the score through xi_{j-1}(theta)
        cot[B * n + B:] = -(np.einsum("j,bjk->bk", powers, weighted[mid_idx])
                            * td_rho[mid_idx, None])

    live = ~terminal
    if live.any():
        g_in = critic.grad_wrt_input(c_cache, np.ones((2 * B, 1)))
        g_u = g_in[B:, :adim]
        w_scale = (gamma ** n) * rho
        cot[B * n:B * n + B][live] += w_scale[live, None] * g_u[live]
        last_rows = np.arange(B) * n + (n - 1)
        cot[last_rows[live]] += -alpha * w_scale[live, None] * g_u[live]

    mean0 = a_win[:, 0]
    hinge = np.maximum(0.0, np.abs(mean0) - policy.action_bound[None, :])
    cot[np.arange(B) * n] += -cfg.penalty_weight * 2.0 * hinge * np.sign(mean0)

    result.actor_direction = actor.vjp(a_cache, cot) / B
    critic_cot = np.concatenate([td_rho, np.zeros(B)])[:, None]
    result.critic_direction = critic.vjp(c_cache, critic_cot) / B
    return result


def temporal_difference(policy, critic, w: SequenceWindow, theta, nu,
                        cfg: AlgoConfig) -> float:
    """n-step temporal difference with both critic evaluations taken at
    adjusted noises recomputed under the current theta; terminal windows
    bootstrap zero."""
    res = batch_update(policy, critic, [w], theta, nu, cfg, want_directions=False)
    return float(res.td[0])


def actor_direction(policy, critic, w: SequenceWindow, theta, nu,
                    cfg: AlgoConfig) -> np.ndarray:
    res = batch_update(policy, critic, [w], theta, nu, cfg)
    return res.actor_direction


def critic_direction(policy, critic, w: SequenceWindow, theta, nu,
                     cfg: AlgoConfig) -> np.ndarray:
    res = batch_update(policy, critic, [w], theta, nu, cfg)
    return res.critic_direction


class Trainer:
    """Owns the parameter vectors and ADAM states; updates are serialized.

    Read-only snapshots of theta may be handed out for evaluation episodes;
    train_step never mutates arrays in place.
    """

    def __init__(self, policy: SequencePolicy, critic: Mlp, cfg: AlgoConfig,
                 theta: np.ndarray, nu: np.ndarray):
        self.policy = policy
        self.critic = critic
        self.cfg = cfg
        self.theta = theta
        self.nu = nu
        self.adam_actor = AdamState.init(theta.size, cfg.actor_lr)
        self.adam_critic = AdamState.init(nu.size, cfg.critic_lr)
        self.skipped_updates = 0

    def train_step(self, buffer: ReplayBuffer, rng) -> UpdateDiagnostics:
        """gradient_steps minibatch updates; a skipped update (non-finite
        direction) leaves parameters unchanged and is counted."""
        diag = UpdateDiagnostics()
        for _ in range(self.cfg.gradient_steps):
            try:
                batch = buffer.sample_batch(rng, self.cfg.minibatch_size)
            except BufferNotReady:
                return UpdateDiagnostics(ready=False)
            res = batch_update(self.policy, self.critic, batch,
                               self.theta, self.nu, self.cfg)
            finite = (np.all(np.isfinite(res.td))
                      and np.all(np.isfinite(res.actor_direction))
                      and np.all(np.isfinite(res.critic_direction)))
            if not finite:
                self.skipped_updates += 1
                return UpdateDiagnostics(skipped=True)
            self.theta, self.adam_actor = adam_step(
                self.theta, res.actor_direction, self.adam_actor)
            self.nu, self.adam_critic = adam_step(
                self.nu, res.critic_direction, self.adam_critic)
            diag = UpdateDiagnostics(
                td=float(res.td.mean()),
                rho=float(res.rho.mean()),
                raw_ratio=float(res.raw.mean()),
                critic_start=float(res.q_start.mean()),
                actor_grad_norm=float(np.linalg.norm(res.actor_direction)),
                critic_grad_norm=float(np.linalg.norm(res.critic_direction)),
            )
        return diag
