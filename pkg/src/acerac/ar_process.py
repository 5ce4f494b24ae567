"""First-order autoregressive exploration noise.

The process starts each episode from a fresh draw xi_1 = eps_1 and then
follows xi_t = alpha * xi_{t-1} + sqrt(1 - alpha^2) * eps_t with
eps_t ~ N(0, C).  Its marginal distribution is N(0, C) at every step, and
the lag-k autocovariance is alpha^|k| C.
"""

from __future__ import annotations

import numpy as np

from .kron_gauss import MAX_ALPHA, CovKernel, diagonal_kernel


class ArNoise:
    """Mutable noise state for one agent-environment loop (not shared).

    The random stream is owned by the caller so concurrent loops can use
    independent streams.
    """

    def __init__(self, alpha: float, kernel: CovKernel):
        if not 0.0 <= alpha < MAX_ALPHA:
            raise ValueError(f"alpha must lie in [0, {MAX_ALPHA}), got {alpha}")
        self.alpha = alpha
        self.kernel = kernel
        self.xi = np.zeros(kernel.dim)
        self.fresh = False
        self._scale = float(np.sqrt(1.0 - alpha * alpha))

    @classmethod
    def isotropic(cls, alpha: float, sigma: float, dim: int) -> "ArNoise":
        return cls(alpha, diagonal_kernel(sigma, dim))

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def reset(self, rng) -> np.ndarray:
        """Start an episode: xi is a fresh N(0, C) draw."""
        self.xi = self.kernel.sample(rng)
        self.fresh = True
        return self.xi

    def step(self, rng) -> np.ndarray:
        """Advance one step: xi <- alpha*xi + sqrt(1-alpha^2)*eps.

        Reads only the current xi plus a fresh draw, so the process is
        Markov by construction.
        """
        self.xi = self.alpha * self.xi + self._scale * self.kernel.sample(rng)
        self.fresh = False
        return self.xi


def simulate(noise: ArNoise, steps: int, rng) -> np.ndarray:
    """Trajectory of `steps` values starting from a fresh reset.

    Equivalent to reset() followed by steps-1 step() calls on the same
    stream (normal draws are consumed in the same order), but with the
    draws batched so million-step runs stay fast.  Returns shape
    (steps, dim).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dim = noise.dim
    z = rng.standard_normal((steps, dim))
    chol = noise.kernel.chol
    out = np.empty((steps, dim))
    alpha, scale = noise.alpha, noise._scale
    if dim == 1:
        # scalar fast path; the inner loop stays on numpy scalars
        c = chol[0, 0]
        o, e = out[:, 0], z[:, 0]
        prev = c * e[0]
        o[0] = prev
        for t in range(1, steps):
            prev = alpha * prev + scale * (c * e[t])
            o[t] = prev
    else:
        # chol @ z[t] term by term so rounding matches step() bit for bit
        out[0] = chol @ z[0]
        for t in range(1, steps):
            out[t] = alpha * out[t - 1] + scale * (chol @ z[t])
    noise.xi = out[-1].copy()
    noise.fresh = steps == 1
    return out
