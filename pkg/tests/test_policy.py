import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acerac.kron_gauss import LOG_2PI, diagonal_kernel
from acerac.nets import Mlp
from acerac.policy import SequencePolicy
from helpers import dense_log_density, fd_grad, rel_err, synth_window

STATE_DIM = 3


def make_policy(n=2, alpha=0.5, dim=1, sigma=0.6, hidden=(6,)):
    actor = Mlp([STATE_DIM, *hidden, dim])
    kernel = diagonal_kernel(sigma, dim)
    return SequencePolicy(actor, np.full(dim, 2.0), n, alpha, kernel)


@pytest.fixture
def policy():
    return make_policy()


@pytest.fixture
def theta(policy):
    return policy.actor.init_params(np.random.default_rng(0))


class TestAct:
    def test_zero_noise_returns_mean(self, policy, theta):
        s = np.array([0.2, -0.4, 1.0])
        out = policy.act(s, np.zeros(1), theta)
        assert np.array_equal(out.raw_action, out.mean)
        assert np.array_equal(out.mean, policy.actor.forward(theta, s))

    def test_zero_weight_actor_returns_noise(self, policy):
        out = policy.act(np.ones(STATE_DIM), np.array([0.7]),
                         np.zeros(policy.actor.n_params))
        assert np.array_equal(out.raw_action, [0.7])

    def test_noise_recoverable_and_clipping(self, policy, theta):
        s = np.array([1.0, 0.0, 0.0])
        xi = np.array([5.0])
        out = policy.act(s, xi, theta)
        assert np.array_equal(out.raw_action - out.mean, xi)
        assert np.array_equal(out.action, np.clip(out.raw_action, -2.0, 2.0))
        assert out.raw_action[0] > 2.0  # raw stays unclipped

    def test_action_distribution(self, policy, theta):
        s = np.array([0.3, 0.3, -0.5])
        rng = np.random.default_rng(1)
        draws = np.array([policy.act(s, policy.kernel.sample(rng), theta).raw_action[0]
                          for _ in range(100_000)])
        mean = policy.actor.forward(theta, s)[0]
        assert abs(draws.mean() - mean) < 4 * 0.6 / np.sqrt(draws.size)
        assert abs(draws.var() - 0.36) < 0.03 * 0.36

    def test_non_finite_mean_is_fatal(self, policy):
        bad = np.full(policy.actor.n_params, np.nan)
        with pytest.raises(FloatingPointError):
            policy.act(np.zeros(STATE_DIM), np.zeros(1), bad)


class TestNoiseRetrieval:
    def test_exact_for_unchanged_theta(self, policy, theta):
        rng = np.random.default_rng(2)
        s = rng.standard_normal(STATE_DIM)
        xi = np.array([0.33])
        out = policy.act(s, xi, theta)
        assert np.array_equal(policy.retrieve_noise(s, out.raw_action, theta), xi)

    def test_zero_weight_actor_returns_action(self, policy):
        a = np.array([1.23])
        got = policy.retrieve_noise(np.ones(STATE_DIM), a,
                                    np.zeros(policy.actor.n_params))
        assert np.array_equal(got, a)

    def test_perturbed_theta_direct_formula(self, policy, theta):
        rng = np.random.default_rng(3)
        s = rng.standard_normal(STATE_DIM)
        a = rng.standard_normal(1)
        theta2 = theta + 0.1 * rng.standard_normal(theta.size)
        expected = a - policy.actor.forward(theta2, s)
        assert np.array_equal(policy.retrieve_noise(s, a, theta2), expected)

    def test_initial_retrieval(self, policy, theta):
        s = np.array([0.1, 0.2, 0.3])
        mean = policy.actor.forward(theta, s)
        assert np.allclose(policy.retrieve_noise_initial(s, mean, theta), 0.0)
        got = policy.retrieve_noise_initial(s, mean + 1.0, theta)
        assert np.allclose(got, 2.0)  # alpha = 0.5
        # the matching adjusted noise reproduces the action exactly
        u = policy.adjusted_noise(s, got, theta)
        assert np.allclose(u, mean + 1.0, atol=1e-12)

    def test_initial_retrieval_undefined_at_alpha_zero(self):
        pol = make_policy(alpha=0.0, n=1)
        theta = pol.actor.init_params(np.random.default_rng(4))
        with pytest.raises(ValueError):
            pol.retrieve_noise_initial(np.zeros(STATE_DIM), np.zeros(1), theta)


class TestAdjustedNoise:
    def test_zero_noise(self, policy, theta):
        s = np.array([1.0, -1.0, 0.5])
        assert np.array_equal(policy.adjusted_noise(s, np.zeros(1), theta),
                              policy.actor.forward(theta, s))

    def test_direct_example(self):
        pol = make_policy(alpha=0.5, dim=2)
        zero_theta = np.zeros(pol.actor.n_params)
        u = pol.adjusted_noise(np.zeros(STATE_DIM), np.array([2.0, -2.0]), zero_theta)
        assert np.array_equal(u, [1.0, -1.0])

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(-3, 3))
    def test_round_trip_bijection(self, alpha, xi_val):
        pol = make_policy(alpha=alpha)
        theta = pol.actor.init_params(np.random.default_rng(5))
        s = np.array([0.4, -0.2, 0.8])
        xi = np.array([xi_val])
        u = pol.adjusted_noise(s, xi, theta)
        back = (u - pol.actor.forward(theta, s)) / alpha
        assert np.max(np.abs(back - xi)) < 1e-12


class TestSeqLogDensity:
    def test_degenerate_single_gaussian(self):
        pol = make_policy(n=1, alpha=0.0, sigma=0.5)
        theta = pol.actor.init_params(np.random.default_rng(6))
        rng = np.random.default_rng(7)
        for initial in (True, False):
            w = synth_window(pol, theta, rng, STATE_DIM, initial=initial)
            mean = pol.actor.forward(theta, w.states[0])
            r = w.actions[0] - mean
            expected = -0.5 * (LOG_2PI + np.log(0.25) + r @ r / 0.25)
            assert abs(pol.seq_log_density(w, theta) - expected) < 1e-12

    @pytest.mark.parametrize("initial", [True, False])
    def test_matches_dense_oracle(self, initial):
        pol = make_policy(n=3, alpha=0.7, dim=2)
        rng = np.random.default_rng(8)
        theta_b = pol.actor.init_params(rng)
        theta = theta_b + 0.2 * rng.standard_normal(theta_b.size)
        w = synth_window(pol, theta_b, rng, STATE_DIM, initial=initial)
        mean, gauss = pol.window_mean(w, theta)
        dense = dense_log_density(w.actions.reshape(-1), mean.reshape(-1),
                                  gauss.dense_cov())
        assert abs(pol.seq_log_density(w, theta) - dense) < 1e-9

    @pytest.mark.parametrize("initial", [True, False])
    def test_behavior_density_round_trip(self, initial):
        pol = make_policy(n=4, alpha=0.6, dim=2)
        rng = np.random.default_rng(9)
        theta_b = pol.actor.init_params(rng)
        w = synth_window(pol, theta_b, rng, STATE_DIM, initial=initial)
        assert abs(pol.seq_log_density(w, theta_b) - w.behavior_log_density) < 1e-10

    def test_window_length_mismatch(self, policy, theta):
        rng = np.random.default_rng(10)
        other = make_policy(n=3)
        w = synth_window(other, other.actor.init_params(rng), rng, STATE_DIM)
        with pytest.raises(ValueError, match="n"):
            policy.seq_log_density(w, theta)

    def test_normalization_by_quadrature(self):
        # n*dim <= 2 cases: grid quadrature of exp(log density) over the
        # dominant mass region
        cases = [make_policy(n=1, alpha=0.0, sigma=0.7),
                 make_policy(n=2, alpha=0.6, sigma=0.7),
                 make_policy(n=1, alpha=0.4, sigma=0.7, dim=2)]
        rng = np.random.default_rng(11)
        for pol in cases:
            theta = pol.actor.init_params(rng)
            w = synth_window(pol, theta, rng, STATE_DIM,
                             initial=pol.n == 1 and pol.dim == 2)
            mean, gauss = pol.window_mean(w, theta)
            mu = mean.reshape(-1)
            size = mu.size
            half_width = 6.0 * np.sqrt(np.max(np.diag(gauss.dense_cov())))
            grid = np.linspace(-half_width, half_width, 301)
            dx = grid[1] - grid[0]
            if size == 1:
                points = mu[0] + grid[:, None]
                volume = dx
            else:
                g1, g2 = np.meshgrid(grid, grid, indexing="ij")
                points = mu[None, :] + np.stack([g1.ravel(), g2.ravel()], axis=1)
                volume = dx * dx
            resid = (points - mu).reshape(-1, gauss.n, gauss.dim)
            weighted = np.einsum("ij,bjk,kl->bil", gauss.lag.inv, resid,
                                 gauss.kernel.inv)
            quad = np.einsum("bij,bij->b", resid, weighted)
            logd = -0.5 * (size * LOG_2PI + gauss.log_det + quad)
            # the vectorized grid density must agree with the module call
            for idx in (0, len(points) // 2, len(points) - 1):
                w2 = w
                w2.actions[:] = points[idx].reshape(gauss.n, gauss.dim)
                assert abs(pol.seq_log_density(w2, theta) - logd[idx]) < 1e-9
            assert abs(np.exp(logd).sum() * volume - 1.0) < 1e-3


class TestSeqLogDensityGrad:
    def test_zero_residual_zero_grad(self, policy, theta):
        rng = np.random.default_rng(12)
        w = synth_window(policy, theta, rng, STATE_DIM, initial=True)
        w.actions[:] = policy.actor.forward(theta, w.states)
        grad = policy.seq_log_density_grad(w, theta)
        assert np.array_equal(grad, np.zeros_like(grad))

    def test_linear_actor_closed_form(self):
        pol = make_policy(n=1, alpha=0.5, sigma=0.4, hidden=())
        rng = np.random.default_rng(13)
        theta = pol.actor.init_params(rng)
        w = synth_window(pol, theta, rng, STATE_DIM, initial=False)
        a = w.actions[0]
        mean = pol.actor.forward(theta, w.states[0])
        xi_prev = w.prev_action - pol.actor.forward(theta, w.prev_state)
        resid = (a - mean - 0.5 * xi_prev) / ((1 - 0.25) * 0.16)
        expected_w = np.outer(resid, w.states[0] - 0.5 * w.prev_state).reshape(-1)
        expected_b = resid * (1 - 0.5)
        expected = np.concatenate([expected_w, expected_b])
        grad = pol.seq_log_density_grad(w, theta)
        assert np.max(np.abs(grad - expected)) < 1e-10

    @pytest.mark.parametrize("initial,alpha,n,dim", [
        (False, 0.5, 2, 1),
        (True, 0.5, 2, 1),
        (False, 0.8, 3, 2),
        (False, 0.0, 2, 2),
        (True, 0.0, 1, 1),
    ])
    def test_total_gradient_matches_finite_differences(self, initial, alpha, n, dim):
        pol = make_policy(n=n, alpha=alpha, dim=dim)
        rng = np.random.default_rng(14)
        theta_b = pol.actor.init_params(rng)
        w = synth_window(pol, theta_b, rng, STATE_DIM, initial=initial)
        theta = theta_b + 0.1 * rng.standard_normal(theta_b.size)
        grad = pol.seq_log_density_grad(w, theta)
        fd = fd_grad(lambda p: pol.seq_log_density(w, p), theta)
        assert rel_err(grad, fd) < 1e-4


class TestScoreIdentity:
    def test_on_policy_score_mean_is_zero(self):
        pol = make_policy(n=2, alpha=0.6, dim=1, hidden=(4,))
        rng = np.random.default_rng(15)
        theta = pol.actor.init_params(rng)
        w = synth_window(pol, theta, rng, STATE_DIM, initial=False)
        mean, gauss = pol.window_mean(w, theta)
        n_draws = 6000
        grads = np.empty((n_draws, theta.size))
        for i in range(n_draws):
            w.actions[:] = gauss.sample(mean.reshape(-1), rng).reshape(pol.n, pol.dim)
            grads[i] = pol.seq_log_density_grad(w, theta)
        avg = grads.mean(axis=0)
        se = grads.std(axis=0) / np.sqrt(n_draws)
        assert np.linalg.norm(avg) < 4 * np.linalg.norm(se)
