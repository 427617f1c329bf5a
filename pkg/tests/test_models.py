"""Model wrapper: initialization, forward, energy parameterisation, checkpoints."""

import numpy as np
import pytest

from diffmcmc import adgraph as ag
from diffmcmc import models
from diffmcmc.models import ArchConfig, DiffusionModel

from conftest import finite_diff_grad

SMALL = ArchConfig(input_dim=2, hidden=8, inner=12, blocks=2, time_dim=4, timesteps=6)


class FakeSchedule:
    def __init__(self, T):
        self.T = T
        self.sigma = np.linspace(0.0, 1.0, T + 1)


class TestInitParams:
    def test_same_seed_bit_identical(self):
        a = models.init_params(SMALL, seed=5)
        b = models.init_params(SMALL, seed=5)
        assert set(a) == set(b)
        for name in a:
            assert np.array_equal(a[name], b[name]), name

    def test_different_seeds_differ(self):
        a = models.init_params(SMALL, seed=1)
        b = models.init_params(SMALL, seed=2)
        assert any(not np.array_equal(a[n], b[n]) for n in a)

    def test_default_output_linear_shapes(self):
        shapes = models.param_shapes(ArchConfig())
        assert shapes["out.w"] == (128, 2)
        assert shapes["out.b"] == (2,)

    def test_biases_zero_and_weights_bounded(self):
        p = models.init_params(SMALL, seed=3)
        assert np.all(p["in.b"] == 0.0)
        assert np.all(np.abs(p["in.w"]) <= 1.0 / np.sqrt(2))
        assert np.all(np.abs(p["blk0.fc2.w"]) <= 1.0 / np.sqrt(SMALL.inner))


class TestNetForward:
    def test_output_dim_and_finite(self):
        m = models.new_model(models.SCORE, SMALL, seed=0)
        out = models.net_forward(m, [0.3, -0.7], t=2)
        assert out.shape == (2,)
        assert np.all(np.isfinite(out))

    def test_batched_matches_single(self):
        # BLAS blocking differs with batch size, so equality is near-machine
        m = models.new_model(models.SCORE, SMALL, seed=0)
        xs = np.array([[0.1, 0.2], [-0.5, 0.8], [1.0, -1.0]])
        batched = models.net_forward(m, xs, t=3)
        for i, x in enumerate(xs):
            np.testing.assert_allclose(batched[i], models.net_forward(m, x, t=3), rtol=1e-12, atol=1e-14)

    def test_zeroed_output_linear_annihilates(self):
        m = models.new_model(models.SCORE, SMALL, seed=0)
        m.params["out.w"][:] = 0.0
        m.params["out.b"][:] = 0.0
        np.testing.assert_array_equal(models.net_forward(m, [0.4, 0.6], t=1), [0.0, 0.0])

    def test_changing_t_changes_output(self):
        m = models.new_model(models.SCORE, SMALL, seed=0)
        a = models.net_forward(m, [0.4, 0.6], t=1)
        b = models.net_forward(m, [0.4, 0.6], t=2)
        assert not np.array_equal(a, b)

    def test_t_out_of_range_rejected(self):
        m = models.new_model(models.SCORE, SMALL, seed=0)
        with pytest.raises(ValueError, match="range"):
            models.net_forward(m, [0.0, 0.0], t=0)
        with pytest.raises(ValueError, match="range"):
            models.net_forward(m, [0.0, 0.0], t=SMALL.timesteps + 1)


def _identity_energy_model():
    """Energy model whose network computes s(x, t) = x, so E = ||x||^2."""
    arch = ArchConfig(input_dim=2, hidden=2, inner=3, blocks=1, time_dim=2, timesteps=4)
    m = models.new_model(models.ENERGY, arch, seed=0)
    for name in m.params:
        m.params[name][:] = 0.0
    m.params["blk0.norm.gain"][:] = 1.0
    m.params["in.w"][:] = np.eye(2)
    m.params["out.w"][:] = np.eye(2)
    return m


class TestEnergyValue:
    def test_score_model_rejected(self):
        m = models.new_model(models.SCORE, SMALL, seed=0)
        with pytest.raises(ValueError, match="energy"):
            models.energy_value(m, [0.0, 0.0], t=1)

    def test_zero_head_gives_zero_energy(self):
        m = models.new_model(models.ENERGY, SMALL, seed=0)
        m.params["out.w"][:] = 0.0
        m.params["out.b"][:] = 0.0
        assert models.energy_value(m, [0.3, 0.4], t=2) == 0.0

    def test_constant_head_three_four_gives_25(self):
        m = models.new_model(models.ENERGY, SMALL, seed=0)
        m.params["out.w"][:] = 0.0
        m.params["out.b"][:] = np.array([3.0, 4.0])
        assert models.energy_value(m, [0.1, -0.2], t=1) == pytest.approx(25.0, rel=1e-12)

    def test_nonnegative_everywhere(self):
        m = models.new_model(models.ENERGY, SMALL, seed=4)
        rng = np.random.default_rng(0)
        xs = rng.normal(size=(50, 2)) * 2
        ts = rng.integers(1, SMALL.timesteps + 1, size=50)
        assert np.all(models.energy_value(m, xs, ts) >= 0.0)

    def test_gradient_matches_finite_differences(self):
        m = models.new_model(models.ENERGY, SMALL, seed=7)
        x = np.array([[0.3, -0.5]])
        pn = models.param_nodes(m)
        xn = ag.input_node(x)
        root = ag.reduce_sum(models.energy_graph(SMALL, pn, xn, np.array([2])))
        fd = finite_diff_grad(root, xn)
        np.testing.assert_allclose(models.energy_input_gradient(m, x, t=2), fd, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(models.energy_input_gradient_graph(m, x, t=2), fd, rtol=1e-5, atol=1e-8)


class TestModelEps:
    def test_score_model_eps_is_net_forward(self):
        m = models.new_model(models.SCORE, SMALL, seed=0)
        sched = FakeSchedule(SMALL.timesteps)
        x = np.array([[0.2, 0.9]])
        np.testing.assert_array_equal(models.model_eps(m, x, 3, sched), models.net_forward(m, x, 3))

    def test_energy_identity_stub_gives_sigma_times_2x(self):
        m = _identity_energy_model()
        sched = FakeSchedule(m.arch.timesteps)
        x = np.array([[0.3, -0.8], [1.0, 0.5]])
        eps = models.model_eps(m, x, 2, sched)
        np.testing.assert_allclose(eps, sched.sigma[2] * 2.0 * x, rtol=1e-12)

    def test_implied_stub_score_is_conservative_on_closed_polygon(self):
        # implied score of E = ||x||^2 is -2x; exact trapezoid around a loop is 0
        m = _identity_energy_model()
        sched = FakeSchedule(m.arch.timesteps)

        def implied_score(x):
            return -models.model_eps(m, x, 2, sched) / sched.sigma[2]

        rng = np.random.default_rng(3)
        poly = rng.normal(size=(6, 2))
        poly = np.vstack([poly, poly[0]])
        total = 0.0
        for a, b in zip(poly[:-1], poly[1:]):
            total += 0.5 * (implied_score(a) + implied_score(b)) @ (b - a)
        assert abs(total) < 1e-12

    def test_implied_score_is_gradient_of_negative_energy(self):
        m = models.new_model(models.ENERGY, SMALL, seed=11)
        sched = FakeSchedule(SMALL.timesteps)
        x = np.array([[0.4, 0.1]])
        t = 3
        eps = models.model_eps(m, x, t, sched)
        implied = -eps / sched.sigma[t]
        h = 1e-6
        fd = np.zeros(2)
        for i in range(2):
            xp, xm = x.copy(), x.copy()
            xp[0, i] += h
            xm[0, i] -= h
            fd[i] = -(models.energy_value(m, xp, t)[0] - models.energy_value(m, xm, t)[0]) / (2 * h)
        np.testing.assert_allclose(implied[0], fd, rtol=1e-4, atol=1e-8)


class TestFastPathMatchesGraphPath:
    """The numpy inference path must agree with the autodiff graph route."""

    @pytest.mark.parametrize("seed", range(5))
    def test_forward_agreement(self, seed):
        m = models.new_model(models.SCORE, SMALL, seed=seed)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(17, 2)) * 1.5
        for t in (1, SMALL.timesteps, rng.integers(1, SMALL.timesteps + 1, size=17)):
            fast = models.net_forward(m, x, t)
            graph = models.net_forward_graph(m, x, t)
            np.testing.assert_allclose(fast, graph, rtol=1e-12, atol=1e-13)

    @pytest.mark.parametrize("seed", range(5))
    def test_input_gradient_agreement(self, seed):
        m = models.new_model(models.ENERGY, SMALL, seed=100 + seed)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(13, 2))
        for t in (2, rng.integers(1, SMALL.timesteps + 1, size=13)):
            fast = models.energy_input_gradient(m, x, t)
            graph = models.energy_input_gradient_graph(m, x, t)
            np.testing.assert_allclose(fast, graph, rtol=1e-10, atol=1e-12)

    def test_energy_value_agreement(self):
        m = models.new_model(models.ENERGY, SMALL, seed=3)
        x = np.random.default_rng(0).normal(size=(9, 2))
        graph_s = models.net_forward_graph(m, x, 4)
        np.testing.assert_allclose(models.energy_value(m, x, 4), (graph_s**2).sum(-1), rtol=1e-12)


class TestArchitectureSharing:
    def test_score_and_energy_share_network_body(self):
        params = models.init_params(SMALL, seed=9)
        score = DiffusionModel(dict(params), models.SCORE, SMALL)
        energy = DiffusionModel(dict(params), models.ENERGY, SMALL)
        x = np.array([[0.2, -0.3]])
        s_out = models.net_forward(score, x, 2)
        e_out = models.net_forward(energy, x, 2)
        np.testing.assert_array_equal(s_out, e_out)
        np.testing.assert_allclose(models.energy_value(energy, x, 2), (e_out**2).sum(axis=-1), rtol=1e-12)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        m = models.new_model(models.ENERGY, SMALL, seed=13)
        path = str(tmp_path / "m.ckpt")
        models.save_checkpoint(m, path, schedule_name="cosine-6", seed=13)
        loaded = models.load_checkpoint(path)
        assert loaded.parameterisation == models.ENERGY
        assert loaded.arch == SMALL
        for name in m.params:
            assert np.array_equal(loaded.params[name], m.params[name]), name

    def test_metadata_fields(self, tmp_path):
        m = models.new_model(models.SCORE, SMALL, seed=1)
        path = str(tmp_path / "m.ckpt")
        models.save_checkpoint(m, path, schedule_name="cosine-6", seed=1)
        meta = models.checkpoint_metadata(path)
        assert meta["format_version"] == 1
        assert meta["parameterisation"] == "score"
        assert meta["schedule"] == "cosine-6"
        assert meta["seed"] == 1

    def test_truncated_file_raises_structured_error(self, tmp_path):
        m = models.new_model(models.SCORE, SMALL, seed=1)
        path = str(tmp_path / "m.ckpt")
        models.save_checkpoint(m, path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[: len(blob) // 2])
        with pytest.raises(models.CheckpointError, match="truncated"):
            models.load_checkpoint(path)

    def test_garbage_header_raises(self, tmp_path):
        path = str(tmp_path / "m.ckpt")
        open(path, "wb").write(b"\x00\x01\x02 not a checkpoint")
        with pytest.raises(models.CheckpointError):
            models.load_checkpoint(path)

    def test_version_mismatch_raises(self, tmp_path):
        import json

        m = models.new_model(models.SCORE, SMALL, seed=1)
        path = str(tmp_path / "m.ckpt")
        models.save_checkpoint(m, path)
        blob = open(path, "rb").read()
        nl = blob.find(b"\n")
        header = json.loads(blob[:nl])
        header["format_version"] = 99
        open(path, "wb").write(json.dumps(header).encode() + blob[nl:])
        with pytest.raises(models.CheckpointError, match="format_version"):
            models.load_checkpoint(path)

    def test_wrong_shape_names_array(self, tmp_path):
        import json

        m = models.new_model(models.SCORE, SMALL, seed=1)
        path = str(tmp_path / "m.ckpt")
        models.save_checkpoint(m, path)
        blob = open(path, "rb").read()
        nl = blob.find(b"\n")
        header = json.loads(blob[:nl])
        for a in header["arrays"]:
            if a["name"] == "out.b":
                a["shape"] = [3]
        open(path, "wb").write(json.dumps(header).encode() + blob[nl:])
        with pytest.raises(models.CheckpointError, match="out.b"):
            models.load_checkpoint(path)

    def test_missing_array_named(self, tmp_path):
        import json

        m = models.new_model(models.SCORE, SMALL, seed=1)
        path = str(tmp_path / "m.ckpt")
        models.save_checkpoint(m, path)
        blob = open(path, "rb").read()
        nl = blob.find(b"\n")
        header = json.loads(blob[:nl])
        header["arrays"] = [a for a in header["arrays"] if a["name"] != "in.w"]
        open(path, "wb").write(json.dumps(header).encode() + blob[nl:])
        with pytest.raises(models.CheckpointError, match="in.w"):
            models.load_checkpoint(path)
