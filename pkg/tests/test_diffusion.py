"""Schedule identities, forward corruption, loss and the reverse chain."""

import numpy as np
import pytest

from diffmcmc import diffusion as df
from diffmcmc import models
from diffmcmc.models import ArchConfig

SMALL = ArchConfig(input_dim=2, hidden=8, inner=12, blocks=2, time_dim=4, timesteps=10)


def small_schedule():
    return df.cosine_schedule(SMALL.timesteps)


class TestCosineSchedule:
    def setup_method(self):
        self.s = df.cosine_schedule(100)

    def test_alpha_bar_matches_closed_form_profile(self):
        # independent evaluation of the squared-cosine profile
        t = np.arange(101)
        f = np.cos((t / 100 + 0.008) / 1.008 * np.pi / 2) ** 2
        profile = f / f[0]
        unclipped = 1.0 - profile[1:] / profile[:-1] <= 0.999
        np.testing.assert_allclose(
            self.s.alpha_bar[1:][unclipped], profile[1:][unclipped], rtol=1e-10
        )

    def test_alpha_bar_strictly_decreasing_and_small_at_T(self):
        assert np.all(np.diff(self.s.alpha_bar[: self.s.T + 1]) < 0)
        assert self.s.alpha_bar[100] < 0.01

    def test_betas_in_unit_interval_with_cap(self):
        assert np.all(self.s.beta[1:] > 0)
        assert np.all(self.s.beta[1:] <= 0.999)

    def test_identities_exact(self):
        s = self.s
        np.testing.assert_array_equal(s.alpha[1:], 1.0 - s.beta[1:])
        np.testing.assert_array_equal(s.alpha_bar[1:], s.alpha_bar[:-1] * s.alpha[1:])
        np.testing.assert_array_equal(s.sigma, np.sqrt(1.0 - s.alpha_bar))
        np.testing.assert_allclose(
            s.beta_tilde[1:] * (1.0 - s.alpha_bar[1:]),
            s.beta[1:] * (1.0 - s.alpha_bar[:-1]),
            rtol=1e-13,
            atol=1e-300,
        )

    def test_first_beta_tilde_uses_alpha_bar_zero(self):
        assert self.s.beta_tilde[1] == 0.0

    def test_sigma_increasing(self):
        assert np.all(np.diff(self.s.sigma[1:]) > 0)


class TestQSample:
    def test_zero_noise_scales_x0(self):
        s = small_schedule()
        out = df.q_sample([1.0, -2.0], t=4, noise=[0.0, 0.0], schedule=s)
        np.testing.assert_array_equal(out, np.sqrt(s.alpha_bar[4]) * np.array([1.0, -2.0]))

    def test_terminal_step_is_nearly_pure_noise(self):
        s = df.cosine_schedule(100)
        noise = np.array([0.7, -1.3])
        out = df.q_sample([0.0, 0.0], t=100, noise=noise, schedule=s)
        np.testing.assert_allclose(out, noise, rtol=1e-5)

    def test_monte_carlo_covariance(self):
        s = df.cosine_schedule(100)
        rng = np.random.default_rng(0)
        t = 50
        n = 100_000
        noise = rng.standard_normal((n, 2))
        out = df.q_sample(np.zeros((n, 2)), np.full(n, t), noise, s)
        target = 1.0 - s.alpha_bar[t]
        cov = np.cov(out.T)
        se_diag = target * np.sqrt(2.0 / n)
        se_off = target / np.sqrt(n)
        assert abs(cov[0, 0] - target) < 3 * se_diag
        assert abs(cov[1, 1] - target) < 3 * se_diag
        assert abs(cov[0, 1]) < 3 * se_off


class TestDiffusionLoss:
    def test_oracle_stub_gives_zero(self):
        s = small_schedule()
        rng = np.random.default_rng(1)
        x0 = np.zeros((512, 2))  # then x_t = sigma_t * eps, so eps = x_t / sigma_t

        def perfect(x_t, t):
            return x_t / s.sigma[t][:, None]

        assert df.diffusion_loss(perfect, x0, rng, s) < 1e-20

    def test_zero_stub_matches_chi_square_expectation(self):
        s = small_schedule()
        rng = np.random.default_rng(2)
        x0 = np.zeros((20_000, 2))
        loss = df.diffusion_loss(lambda x, t: np.zeros_like(x), x0, rng, s)
        # E||eps||^2 = 2, Var(||eps||^2) = 4, so 3 MC standard errors:
        assert abs(loss - 2.0) < 3 * 2.0 / np.sqrt(20_000)

    def test_nonnegative(self):
        s = small_schedule()
        rng = np.random.default_rng(3)
        m = models.new_model(models.SCORE, SMALL, seed=0)
        x0 = rng.normal(size=(64, 2))
        assert df.diffusion_loss(m, x0, rng, s) >= 0.0

    def test_empty_batch_rejected(self):
        s = small_schedule()
        with pytest.raises(ValueError, match="empty"):
            df.diffusion_loss(lambda x, t: x, np.zeros((0, 2)), np.random.default_rng(0), s)


def _spot_check_param_fd(model, x_t, t, eps, schedule, rtol, coords_per_array=2, seed=0):
    """Compare analytic parameter gradients against central differences on a
    random subset of coordinates."""
    from diffmcmc import adgraph as ag

    node, pnodes = df.loss_graph(model, x_t, t, eps, schedule)
    names = list(models.param_shapes(model.arch))
    grads = ag.reverse_gradients(node, [pnodes[k] for k in names])
    rng = np.random.default_rng(seed)
    h = 1e-5
    for k in names:
        leaf = pnodes[k]
        base = leaf.value.copy()
        flat = base.reshape(-1)
        for _ in range(min(coords_per_array, flat.size)):
            j = rng.integers(flat.size)
            pert = flat.copy()
            pert[j] += h
            leaf.set_value(pert.reshape(base.shape))
            fp = float(ag.eval_graph(node))
            pert[j] -= 2 * h
            leaf.set_value(pert.reshape(base.shape))
            fm = float(ag.eval_graph(node))
            leaf.set_value(base)
            fd = (fp - fm) / (2 * h)
            got = grads[leaf].reshape(-1)[j]
            assert got == pytest.approx(fd, rel=rtol, abs=1e-7), (k, j)
    ag.eval_graph(node)


class TestTraining:
    def test_loss_decreases(self):
        s = small_schedule()
        rng = np.random.default_rng(0)
        data = rng.normal(size=(2000, 2)) * 0.5
        m = models.new_model(models.SCORE, SMALL, seed=0)
        cfg = df.TrainConfig(dataset_size=2000, batch_size=64, steps=400, learning_rate=2e-3, seed=7)
        _, trace = df.train_model(m, data, cfg, s)
        losses = np.array([v for _, v in trace])
        head = losses[: len(losses) // 10].mean()
        tail = losses[-len(losses) // 10 :].mean()
        assert tail < head

    def test_same_seed_bit_identical_parameters(self):
        s = small_schedule()
        data = np.random.default_rng(1).normal(size=(256, 2))
        m = models.new_model(models.SCORE, SMALL, seed=3)
        cfg = df.TrainConfig(dataset_size=256, batch_size=32, steps=25, seed=11)
        out1, _ = df.train_model(m, data, cfg, s)
        out2, _ = df.train_model(m, data, cfg, s)
        for k in out1.params:
            assert np.array_equal(out1.params[k], out2.params[k]), k

    def test_score_param_gradients_match_fd(self):
        s = small_schedule()
        rng = np.random.default_rng(5)
        m = models.new_model(models.SCORE, SMALL, seed=5)
        x_t = rng.normal(size=(8, 2))
        t = rng.integers(1, s.T + 1, size=8)
        eps = rng.standard_normal((8, 2))
        _spot_check_param_fd(m, x_t, t, eps, s, rtol=1e-5)

    def test_energy_param_gradients_match_fd_through_double_backprop(self):
        s = small_schedule()
        rng = np.random.default_rng(6)
        m = models.new_model(models.ENERGY, SMALL, seed=6)
        x_t = rng.normal(size=(8, 2))
        t = rng.integers(1, s.T + 1, size=8)
        eps = rng.standard_normal((8, 2))
        _spot_check_param_fd(m, x_t, t, eps, s, rtol=1e-4, coords_per_array=2)

    def test_divergence_aborts_with_diagnostic(self):
        s = small_schedule()
        data = np.random.default_rng(1).normal(size=(64, 2))
        m = models.new_model(models.SCORE, SMALL, seed=3)
        m.params["out.b"][:] = np.inf
        cfg = df.TrainConfig(dataset_size=64, batch_size=16, steps=5, seed=1)
        with pytest.raises(df.TrainingDiverged, match="step 1"):
            df.train_model(m, data, cfg, s)


class TestReverseStep:
    def _schedule_with(self, t, beta, alpha_bar_t):
        T = max(t, 2)
        beta_arr = np.full(T + 1, 0.05)
        beta_arr[t] = beta
        alpha = 1.0 - beta_arr
        abar = np.cumprod(alpha)
        abar[t] = alpha_bar_t
        sigma = np.sqrt(1.0 - abar)
        btil = np.full(T + 1, 0.01)
        return df.NoiseSchedule(T, beta_arr, alpha, abar, btil, sigma)

    def test_zero_eps_zero_noise_rescales(self):
        s = small_schedule()
        t = 5
        out = df.reverse_step(lambda x, tt: np.zeros_like(x), [1.0, 2.0], t, [0.0, 0.0], s)
        np.testing.assert_allclose(out, np.array([1.0, 2.0]) / np.sqrt(s.alpha[t]), rtol=1e-15)

    def test_hand_computed_step(self):
        s = self._schedule_with(t=2, beta=0.1, alpha_bar_t=0.5)
        out = df.reverse_step(lambda x, tt: np.array([1.0, 0.0]), [1.0, 0.0], 2, [0.0, 0.0], s)
        expected = np.array([(1.0 - 0.1 / np.sqrt(0.5)) / np.sqrt(0.9), 0.0])
        np.testing.assert_allclose(out, expected, rtol=1e-14)

    def test_final_step_ignores_noise(self):
        s = small_schedule()
        a = df.reverse_step(lambda x, tt: np.zeros_like(np.asarray(x)), [1.0, 1.0], 1, [9.0, -9.0], s)
        b = df.reverse_step(lambda x, tt: np.zeros_like(np.asarray(x)), [1.0, 1.0], 1, [0.0, 0.0], s)
        np.testing.assert_array_equal(a, b)

    def test_out_of_range_t(self):
        s = small_schedule()
        with pytest.raises(ValueError, match="range"):
            df.reverse_step(lambda x, tt: x, [0.0, 0.0], 0, [0.0, 0.0], s)


class TestReverseSample:
    def test_counts_and_finiteness(self):
        s = small_schedule()
        batch = df.reverse_sample(lambda x, t: np.zeros_like(x), 17, s, np.random.default_rng(0))
        assert batch.samples.shape == (17, 2)
        assert np.all(np.isfinite(batch.samples))

    def test_fixed_seed_reproducible(self):
        s = small_schedule()
        fn = lambda x, t: np.zeros_like(x)
        a = df.reverse_sample(fn, 9, s, np.random.default_rng(42)).samples
        b = df.reverse_sample(fn, 9, s, np.random.default_rng(42)).samples
        np.testing.assert_array_equal(a, b)

    def test_zero_eps_covariance_matches_simulation_oracle(self):
        s = df.cosine_schedule(100)
        # independent oracle: scalar variance recursion of the same chain
        var = 1.0
        for t in range(100, 1, -1):
            var = var / s.alpha[t] + s.beta_tilde[t]
        var = var / s.alpha[1]
        n = 40_000
        out = df.reverse_sample(lambda x, t: np.zeros_like(x), n, s, np.random.default_rng(3)).samples
        emp = out.var(axis=0)
        se = var * np.sqrt(2.0 / n)
        assert abs(emp[0] - var) < 3 * se
        assert abs(emp[1] - var) < 3 * se

    def test_hook_sees_descending_steps_and_replaces_batch(self):
        s = small_schedule()
        seen = []

        def hook(x, t_minus_1):
            seen.append(t_minus_1)
            return np.full_like(x, float(t_minus_1))

        batch = df.reverse_sample(lambda x, t: np.zeros_like(x), 3, s, np.random.default_rng(0), hook=hook)
        assert seen == list(range(s.T - 1, -1, -1))
        np.testing.assert_array_equal(batch.samples, np.zeros((3, 2)))
