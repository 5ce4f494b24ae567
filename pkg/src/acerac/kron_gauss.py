"""Gaussians with Kronecker-structured covariance lag ⊗ kernel.

Action-sequence windows of length n in dim action dimensions are jointly
normal with covariance Lambda ⊗ C, where Lambda (n x n) carries the lag
correlation of the exploration process and C (dim x dim) the per-dimension
noise covariance.  Everything here works on the factors, never on the dense
(n*dim) x (n*dim) matrix.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

# alpha this close to 1 makes the conditional lag matrix numerically singular
MAX_ALPHA = 1.0 - 1e-6


class CovKernel:
    """Per-dimension noise covariance C with cached factorizations.

    Accepts a scalar variance, a vector of per-dimension variances, or a
    full SPD matrix.  A zero kernel is allowed as a degenerate case so that
    noise with sigma = 0 can still be sampled (it is exactly zero); density
    and inverse operations then raise.
    """

    def __init__(self, C):
        C = np.asarray(C, dtype=float)
        if C.ndim == 0:
            C = C.reshape(1, 1)
        elif C.ndim == 1:
            C = np.diag(C)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError(f"covariance kernel C must be square, got shape {C.shape}")
        if not np.array_equal(C, C.T):
            C = 0.5 * (C + C.T)
        self.C = C
        self.dim = C.shape[0]
        self.degenerate = not C.any()
        if self.degenerate:
            self.chol = np.zeros_like(C)
            self.inv = None
            self.log_det = -np.inf
            return
        try:
            self.chol = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise ValueError("covariance kernel C is not positive-definite") from None
        self.inv = _chol_inverse(self.chol)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def sample(self, rng) -> np.ndarray:
        """One draw from N(0, C)."""
        return self.chol @ rng.standard_normal(self.dim)

    def log_density(self, x, mean=0.0) -> float:
        """ln N(x; mean, C)."""
        self._require_spd()
        r = np.atleast_1d(np.asarray(x, dtype=float) - mean)
        return -0.5 * (self.dim * LOG_2PI + self.log_det + r @ self.inv @ r)

    def _require_spd(self):
        if self.degenerate:
            raise ValueError("operation undefined for a zero covariance kernel")

    def __repr__(self):
        return f"CovKernel(dim={self.dim})"


def diagonal_kernel(sigma: float, dim: int) -> CovKernel:
    """Isotropic kernel sigma^2 * I, the default configuration."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return CovKernel(sigma * sigma * np.eye(dim))


class LagMatrix:
    """n x n lag-correlation matrix with cached Cholesky and inverse."""

    def __init__(self, kind: str, n: int, alpha: float, lam: np.ndarray):
        self.kind = kind
        self.n = n
        self.alpha = alpha
        self.lam = lam
        self.chol = np.linalg.cholesky(lam)
        self.inv = _chol_inverse(self.chol)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def __repr__(self):
        return f"LagMatrix(kind={self.kind!r}, n={self.n}, alpha={self.alpha})"


def _check_lag_args(n: int, alpha: float):
    if n < 1:
        raise ValueError(f"window length n must be >= 1, got {n}")
    if not 0.0 <= alpha < MAX_ALPHA:
        raise ValueError(f"alpha must lie in [0, {MAX_ALPHA}), got {alpha}")


def stationary_lag(n: int, alpha: float) -> LagMatrix:
    """Lag matrix of a stationary window: entry (l, k) = alpha^|l-k|."""
    _check_lag_args(n, alpha)
    idx = np.arange(n)
    lam = alpha ** np.abs(np.subtract.outer(idx, idx)).astype(float)
    return LagMatrix("stationary", n, alpha, lam)


def conditional_lag(n: int, alpha: float) -> LagMatrix:
    """Lag matrix of a window conditioned on the preceding noise value:
    entry (l, k) = alpha^|l-k| - alpha^(l+k+2)."""
    _check_lag_args(n, alpha)
    idx = np.arange(n)
    lam = alpha ** np.abs(np.subtract.outer(idx, idx)).astype(float)
    lam = lam - alpha ** (np.add.outer(idx, idx) + 2.0)
    return LagMatrix("conditional", n, alpha, lam)


def conditional_mean_operator(n: int, alpha: float, dim: int) -> np.ndarray:
    """(n*dim) x dim stacked matrix whose k-th block is alpha^(k+1) * I.

    Applied to the preceding noise value it gives the conditional mean of
    the next n noise values.
    """
    if n < 1:
        raise ValueError(f"window length n must be >= 1, got {n}")
    powers = alpha ** np.arange(1, n + 1)
    return np.kron(powers[:, None], np.eye(dim))


def conditional_mean(n: int, alpha: float, xi: np.ndarray) -> np.ndarray:
    """Row-block form of conditional_mean_operator @ xi: shape (n, dim)."""
    powers = alpha ** np.arange(1, n + 1)
    return powers[:, None] * np.asarray(xi, dtype=float)[None, :]


class KroneckerGaussian:
    """N(mean, Lambda ⊗ C) over stacked vectors of length n*dim.

    Stacking is row-block order: x = [x_0; ...; x_{n-1}] with each block of
    length dim, so x reshaped to (n, dim) has the blocks as rows.  Immutable
    after construction; safe to share read-only.
    """

    def __init__(self, lag: LagMatrix, kernel: CovKernel):
        kernel._require_spd()
        self.lag = lag
        self.kernel = kernel
        self.n = lag.n
        self.dim = kernel.dim
        self.size = self.n * self.dim
        self.log_det = self.dim * lag.log_det + self.n * kernel.log_det

    def _blocks(self, x, mean) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        mean = np.asarray(mean, dtype=float).reshape(-1)
        if x.shape[0] != self.size or mean.shape[0] != self.size:
            raise ValueError(
                f"expected stacked vectors of length {self.size}, "
                f"got {x.shape[0]} and {mean.shape[0]}"
            )
        return (x - mean).reshape(self.n, self.dim)

    def apply_precision(self, resid_blocks: np.ndarray) -> np.ndarray:
        """(Lambda ⊗ C)^-1 applied to a residual in (n, dim) row-block form."""
        return self.lag.inv @ resid_blocks @ self.kernel.inv

    def log_density(self, x, mean) -> float:
        """ln N(x; mean, Lambda ⊗ C) via the factorization; the dense
        covariance is never formed."""
        r = self._blocks(x, mean)
        quad = float(np.sum(r * self.apply_precision(r)))
        return -0.5 * (self.size * LOG_2PI + self.log_det + quad)

    def grad_log_density_wrt_mean(self, x, mean) -> np.ndarray:
        """Gradient of log_density with respect to mean: (Lambda ⊗ C)^-1 (x - mean)."""
        r = self._blocks(x, mean)
        return self.apply_precision(r).reshape(-1)

    def sample(self, mean, rng) -> np.ndarray:
        """One draw: mean + (cholLambda ⊗ cholC) z with z standard normal."""
        z = rng.standard_normal((self.n, self.dim))
        x = self.lag.chol @ z @ self.kernel.chol.T
        return np.asarray(mean, dtype=float).reshape(-1) + x.reshape(-1)

    def dense_cov(self) -> np.ndarray:
        """Explicit Lambda ⊗ C; for tests and small problems only."""
        return np.kron(self.lag.lam, self.kernel.C)


def build_stationary(n: int, alpha: float, C) -> KroneckerGaussian:
    """Distribution of an unconditioned noise window: N(0, Lambda0 ⊗ C)."""
    kernel = C if isinstance(C, CovKernel) else CovKernel(C)
    return KroneckerGaussian(stationary_lag(n, alpha), kernel)


def build_conditional(n: int, alpha: float, C) -> KroneckerGaussian:
    """Distribution of a noise window given the preceding value: covariance
    Lambda1 ⊗ C; the mean is supplied at evaluation time."""
    kernel = C if isinstance(C, CovKernel) else CovKernel(C)
    return KroneckerGaussian(conditional_lag(n, alpha), kernel)


def _chol_inverse(chol: np.ndarray) -> np.ndarray:
    """Inverse of L L^T from its Cholesky factor, symmetrized."""
    l_inv = np.linalg.solve(chol, np.eye(chol.shape[0]))
    inv = l_inv.T @ l_inv
    return 0.5 * (inv + inv.T)
