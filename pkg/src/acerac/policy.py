"""Neural-AR policy: actions are a state-dependent mean plus autocorrelated
noise, a_t = A(s_t; theta) + xi_t.

Because the raw (unclipped) action is stored in replay, the noise any past
step used is recoverable under any parameter vector, and the density of an
n-step action window conditioned on the preceding noise value has the
Kronecker-Gaussian form handled by kron_gauss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kron_gauss import (
    LOG_2PI,
    CovKernel,
    KroneckerGaussian,
    build_conditional,
    build_stationary,
    conditional_mean,
)
from .nets import Mlp


@dataclass
class PolicyOutput:
    action: np.ndarray      # clipped copy sent to the environment
    raw_action: np.ndarray  # A(s;theta) + xi, stored in replay
    mean: np.ndarray        # A(s;theta) at execution time


@dataclass
class SequenceWindow:
    """n consecutive steps of one episode plus the context needed to
    re-evaluate their joint action density under new parameters."""

    states: np.ndarray       # (n, state_dim)
    actions: np.ndarray      # (n, action_dim), raw
    rewards: np.ndarray      # (n,)
    behavior_log_density: float
    next_state: np.ndarray   # s_{j+n}
    start_of_episode: bool
    terminal: bool
    truncated: bool
    prev_state: np.ndarray | None   # s_{j-1}; None iff start_of_episode
    prev_action: np.ndarray | None  # raw a_{j-1}; None iff start_of_episode
    j_offset: int                   # position of the window start within its episode

    def __post_init__(self):
        if self.start_of_episode != (self.prev_state is None):
            raise ValueError("prev_state must be present exactly when the window "
                             "does not start an episode")

    @property
    def n(self) -> int:
        return self.states.shape[0]


class SequencePolicy:
    """Bundles the actor network with the noise model for one run.

    n, alpha, and the noise kernel are fixed per run, so both window
    distributions are built once.  All methods are pure in (window, theta)
    and safe to call concurrently on read-only parameter snapshots.
    """

    def __init__(self, actor: Mlp, action_bound, n: int, alpha: float,
                 kernel: CovKernel):
        action_bound = np.asarray(action_bound, dtype=float)
        if actor.out_dim != kernel.dim or action_bound.shape != (kernel.dim,):
            raise ValueError("actor output, kernel, and action bounds disagree on "
                             "the action dimension")
        self.actor = actor
        self.action_bound = action_bound
        self.n = n
        self.alpha = alpha
        self.kernel = kernel
        self.stationary: KroneckerGaussian = build_stationary(n, alpha, kernel)
        self.conditional: KroneckerGaussian = build_conditional(n, alpha, kernel)
        # scale of the one-step conditional covariance (1 - alpha^2) C
        self._step_var_scale = 1.0 - alpha * alpha
        self._lag_powers = alpha ** np.arange(1, n + 1)

    @property
    def dim(self) -> int:
        return self.kernel.dim

    # ------------------------------------------------------------------ acting

    def act(self, s, xi, theta) -> PolicyOutput:
        mean = self.actor.forward(theta, s)
        if not np.all(np.isfinite(mean)):
            raise FloatingPointError("actor produced a non-finite action mean")
        raw = mean + xi
        action = np.clip(raw, -self.action_bound, self.action_bound)
        return PolicyOutput(action=action, raw_action=raw, mean=mean)

    # ------------------------------------------------ noise / adjusted noise

    def retrieve_noise(self, prev_s, prev_a, theta) -> np.ndarray:
        """Noise a mid-episode step used, re-expressed under theta:
        xi_{t-1}(theta) = a_{t-1} - A(s_{t-1}; theta)."""
        return np.asarray(prev_a, dtype=float) - self.actor.forward(theta, prev_s)

    def retrieve_noise_initial(self, s, a, theta) -> np.ndarray:
        """Formal preceding noise for an episode's first step:
        xi_{t-1}(theta) = (a_t - A(s_t; theta)) / alpha.  The matching
        adjusted noise is then exactly a_t."""
        if self.alpha == 0.0:
            raise ValueError("initial-noise retrieval is undefined at alpha = 0")
        return (np.asarray(a, dtype=float) - self.actor.forward(theta, s)) / self.alpha

    def adjusted_noise(self, s, xi_prev, theta) -> np.ndarray:
        """u_{t-1} = A(s_t; theta) + alpha * xi_{t-1}: the expected action at
        s_t given the preceding noise."""
        return self.actor.forward(theta, s) + self.alpha * np.asarray(xi_prev, dtype=float)

    def window_noise(self, w: SequenceWindow, theta) -> np.ndarray | None:
        """xi_{j-1}(theta) for a mid-episode window, None for an episode-initial
        one (whose window density conditions on nothing)."""
        if w.start_of_episode:
            return None
        return self.retrieve_noise(w.prev_state, w.prev_action, theta)

    # ------------------------------------------------------------- densities

    def step_log_density(self, xi, xi_prev) -> float:
        """One-step conditional log-density of the executed noise value;
        pass xi_prev=None at an episode's first step.

        This is also the conditional log-density of the raw action given
        state and preceding noise (the actor mean shifts both identically),
        which is what replay stores.
        """
        xi = np.asarray(xi, dtype=float)
        if xi_prev is None:
            r, scale = xi, 1.0
        else:
            r = xi - self.alpha * np.asarray(xi_prev, dtype=float)
            scale = self._step_var_scale
        quad = float(r @ self.kernel.inv @ r) / scale
        log_det = self.dim * np.log(scale) + self.kernel.log_det
        return -0.5 * (self.dim * LOG_2PI + log_det + quad)

    def window_mean(self, w: SequenceWindow, theta,
                    xi_prev=None) -> tuple[np.ndarray, KroneckerGaussian]:
        """Mean blocks (n, dim) and matching distribution for a window."""
        means = self.actor.forward(theta, w.states)
        if w.start_of_episode:
            return means, self.stationary
        if xi_prev is None:
            xi_prev = self.retrieve_noise(w.prev_state, w.prev_action, theta)
        return means + conditional_mean(self.n, self.alpha, xi_prev), self.conditional

    def seq_log_density(self, w: SequenceWindow, theta, xi_prev=None) -> float:
        """Log-density of the window's action sequence under theta.

        Mid-episode windows condition on xi_{j-1}(theta) (recomputed from the
        stored preceding transition unless supplied); episode-initial windows
        use the stationary window distribution.
        """
        if w.n != self.n:
            raise ValueError(f"window length {w.n} does not match configured n={self.n}")
        mean, gauss = self.window_mean(w, theta, xi_prev)
        return gauss.log_density(w.actions.reshape(-1), mean.reshape(-1))

    def seq_log_density_grad(self, w: SequenceWindow, theta) -> np.ndarray:
        """Total gradient over theta of seq_log_density.

        For mid-episode windows the mean depends on theta both through the
        window's own actor outputs and through xi_{j-1}(theta) =
        a_{j-1} - A(s_{j-1}; theta); both paths are included.
        """
        if w.n != self.n:
            raise ValueError(f"window length {w.n} does not match configured n={self.n}")
        if w.start_of_episode:
            out, cache = self.actor.forward_cached(theta, w.states)
            resid = w.actions - out
            cots = self.stationary.apply_precision(resid)
            return self.actor.vjp(cache, cots)
        rows = np.vstack([w.states, w.prev_state[None, :]])
        out, cache = self.actor.forward_cached(theta, rows)
        xi_prev = w.prev_action - out[-1]
        mean = out[:-1] + conditional_mean(self.n, self.alpha, xi_prev)
        weighted = self.conditional.apply_precision(w.actions - mean)
        cots = np.vstack([weighted, -(self._lag_powers @ weighted)[None, :]])
        return self.actor.vjp(cache, cots)
