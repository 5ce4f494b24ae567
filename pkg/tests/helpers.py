"""Shared test utilities: finite differences and dense-covariance oracles."""

import numpy as np


def fd_grad(f, x, step=1e-5):
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += step
        lo.flat[i] -= step
        g.flat[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def rel_err(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(np.linalg.norm(exact), 1e-12)
    return np.linalg.norm(approx - exact) / denom


def dense_log_density(x, mean, cov):
    """Generic multivariate normal log-density from an explicit covariance."""
    x = np.asarray(x, dtype=float).reshape(-1)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    r = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (x.size * np.log(2.0 * np.pi) + logdet + r @ np.linalg.solve(cov, r))


def random_spd(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T + dim * np.eye(dim))


def push_episode(buffer, policy, theta, rng, length, state_dim, end="truncated"):
    """Fill one episode of the real action process over random states."""
    from acerac.ar_process import ArNoise
    from acerac.replay import ReplayRecord

    noise = ArNoise(policy.alpha, policy.kernel)
    noise.reset(rng)
    xi_prev = None
    s = rng.standard_normal(state_dim)
    for t in range(length):
        if t > 0:
            noise.step(rng)
        out = policy.act(s, noise.xi, theta)
        logp = policy.step_log_density(noise.xi, xi_prev)
        next_s = rng.standard_normal(state_dim)
        last = t == length - 1
        buffer.push(ReplayRecord(
            s=s, a_raw=out.raw_action, r=float(rng.standard_normal()),
            mean=out.mean, log_cond_density=logp, next_s=next_s,
            episode_start=t == 0,
            terminal=last and end == "terminal",
            truncated=last and end == "truncated",
        ))
        xi_prev = noise.xi
        s = next_s


def synth_window(policy, theta_b, rng, state_dim, initial=False,
                 terminal=False, truncated=False):
    """Window generated by the real action process under behavior
    parameters theta_b, with the behavior density accumulated step by step
    exactly as the interaction loop stores it."""
    from acerac.policy import SequenceWindow

    n, alpha = policy.n, policy.alpha
    kernel = policy.kernel
    scale = np.sqrt(1.0 - alpha * alpha)
    states = rng.standard_normal((n, state_dim))
    next_state = rng.standard_normal(state_dim)
    if initial:
        prev_state = prev_action = None
        xi = kernel.sample(rng)
        xis = [xi]
        logp = policy.step_log_density(xi, None)
    else:
        prev_state = rng.standard_normal(state_dim)
        xi_prev = kernel.sample(rng)
        prev_action = policy.actor.forward(theta_b, prev_state) + xi_prev
        xi = alpha * xi_prev + scale * kernel.sample(rng)
        xis = [xi]
        logp = policy.step_log_density(xi, xi_prev)
    for _ in range(n - 1):
        xi_next = alpha * xis[-1] + scale * kernel.sample(rng)
        logp += policy.step_log_density(xi_next, xis[-1])
        xis.append(xi_next)
    actions = policy.actor.forward(theta_b, states) + np.array(xis)
    return SequenceWindow(
        states=states,
        actions=actions,
        rewards=rng.standard_normal(n),
        behavior_log_density=float(logp),
        next_state=next_state,
        start_of_episode=initial,
        terminal=terminal,
        truncated=truncated,
        prev_state=prev_state,
        prev_action=prev_action,
        j_offset=0 if initial else int(rng.integers(1, 10)),
    )
