import numpy as np
import pytest

from zftlearn import denoiser
from zftlearn.dataio import WindowSet
from zftlearn.denoiser import (DenoiserConfig, DenoiserParams, TrainConfig,
                               TrajectoryWindow, _forward_np, _forward_t,
                               _loss_graph, corrupt_batch, loss, metrics,
                               noise_mse, predict_noise, reconstruct_szft,
                               reverse_step_sequence, tokenize, train)
from zftlearn.errors import ConfigError, NumericalError, ShapeError
from zftlearn.geom import quat_canonical, quat_conj, quat_exp, quat_mul
from zftlearn.noise import make_schedule

TINY = DenoiserConfig(hidden=16, heads=2, layers=1, tokens=4, steps=5)


def synthetic_windows(n, tokens=4, seed=0, dt=0.005, episodes=4):
    """Windows with a linear wrench-to-displacement relation baked in."""
    rng = np.random.default_rng(seed)
    eq_p = rng.normal(0.0, 0.05, size=(n, tokens, 3))
    rotvec0 = rng.normal(0.0, 0.2, size=(n, tokens, 3))
    eq_q = quat_exp(rotvec0)
    wrench = np.zeros((n, tokens, 6))
    contact = rng.uniform(size=n) < 0.5
    wrench[contact, :, :3] = rng.normal(0.0, 4.0, size=(contact.sum(), 1, 3))
    wrench[contact, :, 3:] = rng.normal(0.0, 0.5, size=(contact.sum(), 1, 3))
    obs_p = eq_p + wrench[:, :, :3] / 800.0
    obs_q = quat_mul(quat_exp(wrench[:, :, 3:] / 150.0), eq_q)
    return WindowSet(
        obs_p=obs_p, obs_q=quat_canonical(obs_q), eq_p=eq_p,
        eq_q=quat_canonical(eq_q), wrench=wrench,
        episode=np.arange(n) % episodes, dt=dt,
    )


class TestForwardParity:
    def test_numpy_and_autodiff_paths_agree(self):
        params = DenoiserParams.init(TINY, seed=3)
        rng = np.random.default_rng(1)
        pose7 = rng.normal(size=(2, 4, 7))
        ctx6 = rng.normal(size=(2, 4, 6))
        t_idx = np.array([0, 3])
        a = _forward_np(params, pose7, ctx6, t_idx)
        b = _forward_t(params, pose7, ctx6, t_idx).data
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


class TestTokenize:
    def test_shapes_single_token(self):
        cfg = DenoiserConfig(hidden=16, heads=2, layers=1, tokens=1, steps=3)
        params = DenoiserParams.init(cfg, seed=0)
        w = TrajectoryWindow(obs_p=np.zeros((1, 3)),
                             obs_q=np.array([[1.0, 0, 0, 0]]),
                             wrench=np.zeros((1, 6)))
        traj, ctx = tokenize(params, w, t=1)
        assert traj.shape == (1, 16) and ctx.shape == (1, 16)

    def test_deterministic(self):
        params = DenoiserParams.init(TINY, seed=0)
        w = TrajectoryWindow(obs_p=np.ones((4, 3)) * 0.1,
                             obs_q=np.tile([1.0, 0, 0, 0], (4, 1)),
                             wrench=np.ones((4, 6)))
        a1, c1 = tokenize(params, w, t=2)
        a2, c2 = tokenize(params, w, t=2)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(c1, c2)

    def test_timestep_only_changes_via_embedding(self):
        params = DenoiserParams.init(TINY, seed=0)
        w = TrajectoryWindow(obs_p=np.zeros((4, 3)),
                             obs_q=np.tile([1.0, 0, 0, 0], (4, 1)),
                             wrench=np.zeros((4, 6)))
        a1, c1 = tokenize(params, w, t=1)
        a2, c2 = tokenize(params, w, t=4)
        emb = params.tensors["time_emb"].data
        np.testing.assert_allclose(a2 - a1, np.tile(emb[3] - emb[0], (4, 1)),
                                   atol=1e-12)
        np.testing.assert_array_equal(c1, c2)

    def test_window_length_mismatch(self):
        params = DenoiserParams.init(TINY, seed=0)
        w = TrajectoryWindow(obs_p=np.zeros((5, 3)),
                             obs_q=np.tile([1.0, 0, 0, 0], (5, 1)),
                             wrench=np.zeros((5, 6)))
        with pytest.raises(ShapeError):
            tokenize(params, w, t=1)


class TestPredictNoise:
    def test_shape_and_finite(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(3)
        out = predict_noise(params, ws.obs_p, ws.obs_q, ws.wrench, 2)
        assert out.shape == (3, 4, 7)
        assert np.isfinite(out).all()

    def test_wrench_conditioning_is_live(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(4, seed=5)
        with_w = predict_noise(params, ws.obs_p, ws.obs_q, ws.wrench, 3)
        without = predict_noise(params, ws.obs_p, ws.obs_q,
                                np.zeros_like(ws.wrench), 3)
        assert np.abs(with_w - without).max() > 1e-8

    def test_token_order_sensitivity(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(1, seed=6)
        out = predict_noise(params, ws.obs_p, ws.obs_q, ws.wrench, 1)
        perm = [2, 0, 3, 1]
        out_p = predict_noise(params, ws.obs_p[:, perm], ws.obs_q[:, perm],
                              ws.wrench[:, perm], 1)
        assert np.abs(out_p - out[:, perm]).max() > 1e-8

    def test_step_bounds(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(1)
        with pytest.raises(ConfigError):
            predict_noise(params, ws.obs_p, ws.obs_q, ws.wrench, 0)
        with pytest.raises(ConfigError):
            predict_noise(params, ws.obs_p, ws.obs_q, ws.wrench, 6)

    def test_nonfinite_raises_with_location(self):
        params = DenoiserParams.init(TINY, seed=0)
        params.tensors["L0_ff2_w"].data[:] = np.inf
        ws = synthetic_windows(1)
        with np.errstate(invalid="ignore"):
            with pytest.raises(NumericalError, match="layer 0"):
                predict_noise(params, ws.obs_p, ws.obs_q, ws.wrench, 1)


class TestLoss:
    def test_perfect_prediction_zero(self):
        pred = np.concatenate(
            [np.full((2, 4, 3), 0.01), np.tile([1.0, 0, 0, 0], (2, 4, 1))],
            axis=-1)
        assert noise_mse(pred, pred[..., :3], pred[..., 3:], 5.0) == 0.0

    def test_offset_contribution(self):
        target_t = np.zeros((3, 4, 3))
        target_q = np.tile([1.0, 0, 0, 0], (3, 4, 1))
        pred = np.concatenate([target_t, target_q], axis=-1).copy()
        c = 0.07
        pred[..., 1] += c  # translation y axis, weight 1
        assert noise_mse(pred, target_t, target_q, 5.0) == pytest.approx(c * c)
        pred2 = np.concatenate([target_t, target_q], axis=-1).copy()
        pred2[..., 3] += c  # quaternion scalar channel, weight 5
        assert noise_mse(pred2, target_t, target_q, 5.0) == pytest.approx(5 * c * c)

    def test_graph_matches_numpy_twin(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(6, seed=7)
        schedule = params.schedule
        t_arr = np.array([1, 2, 3, 4, 5, 2])
        noisy_p, noisy_q, tt, tq = corrupt_batch(
            schedule, ws.eq_p, ws.eq_q, ws.obs_p, ws.obs_q, t_arr, 0.0, 0.0,
            None)
        g = _loss_graph(params, noisy_p, noisy_q, ws.wrench, tt, tq, t_arr)
        pose7, ctx6 = params.standardize_inputs(noisy_p, noisy_q, ws.wrench)
        pred = _forward_np(params, pose7, ctx6, t_arr - 1)
        expected = noise_mse(pred, tt, tq, params.config.theta_weight)
        assert float(g.data) == pytest.approx(expected, rel=1e-12)

    def test_public_loss_runs(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(5, seed=8)
        value = loss(params, ws, params.schedule, np.random.default_rng(0))
        assert value >= 0.0 and np.isfinite(value)

    def test_empty_batch(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(2).subset(np.array([], dtype=int))
        with pytest.raises(ConfigError):
            loss(params, ws, params.schedule, np.random.default_rng(0))


class TestGradientCheck:
    def test_small_subset_matches_finite_differences(self):
        """Spot-check a few entries of every tensor kind (full sweep lives
        in the acceptance suite)."""
        params = DenoiserParams.init(TINY, seed=11)
        ws = synthetic_windows(2, seed=12)
        t_arr = np.array([2, 4])
        noisy_p, noisy_q, tt, tq = corrupt_batch(
            params.schedule, ws.eq_p, ws.eq_q, ws.obs_p, ws.obs_q, t_arr,
            0.0, 0.0, None)

        def loss_value():
            return float(_loss_graph(params, noisy_p, noisy_q, ws.wrench,
                                     tt, tq, t_arr).data)

        g = _loss_graph(params, noisy_p, noisy_q, ws.wrench, tt, tq, t_arr)
        g.backward()
        rng = np.random.default_rng(13)
        h = 1e-5
        for name, tensor in params.tensors.items():
            flat = tensor.data.reshape(-1)
            grad = tensor.grad.reshape(-1)
            for idx in rng.choice(flat.size, size=min(3, flat.size),
                                  replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                fp = loss_value()
                flat[idx] = orig - h
                fm = loss_value()
                flat[idx] = orig
                fd = (fp - fm) / (2 * h)
                denom = max(abs(fd), abs(grad[idx]), 1e-2)
                assert abs(fd - grad[idx]) / denom < 1e-4, name


class TestReconstruct:
    def test_oracle_inversion_exact(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(8, seed=20)
        target_t = ws.obs_p - ws.eq_p
        target_q = quat_canonical(quat_mul(ws.obs_q, quat_conj(ws.eq_q)))

        def oracle(cur_p, cur_q, wrench, t):
            return np.concatenate([target_t, target_q], axis=-1)

        rec_p, rec_q = reconstruct_szft(params, ws.obs_p, ws.obs_q, ws.wrench,
                                        predict_fn=oracle)
        assert np.abs(rec_p - ws.eq_p).max() < 1e-9
        assert np.abs(rec_q - quat_canonical(ws.eq_q)).max() < 1e-9

    def test_oracle_inversion_with_few_steps(self):
        params = DenoiserParams.init(TINY, seed=0)
        ws = synthetic_windows(2, seed=21)
        target_t = ws.obs_p - ws.eq_p
        target_q = quat_canonical(quat_mul(ws.obs_q, quat_conj(ws.eq_q)))

        def oracle(cur_p, cur_q, wrench, t):
            return np.concatenate([target_t, target_q], axis=-1)

        rec_p, rec_q = reconstruct_szft(params, ws.obs_p, ws.obs_q, ws.wrench,
                                        steps=2, predict_fn=oracle)
        assert np.abs(rec_p - ws.eq_p).max() < 1e-9
        assert np.abs(rec_q - quat_canonical(ws.eq_q)).max() < 1e-9

    def test_output_unit_norm(self):
        params = DenoiserParams.init(TINY, seed=1)
        ws = synthetic_windows(3, seed=22)
        _, rec_q = reconstruct_szft(params, ws.obs_p, ws.obs_q, ws.wrench,
                                    steps=3)
        np.testing.assert_allclose(np.linalg.norm(rec_q, axis=-1), 1.0,
                                   atol=1e-9)

    def test_single_window_shape(self):
        params = DenoiserParams.init(TINY, seed=1)
        ws = synthetic_windows(1, seed=23)
        rec_p, rec_q = reconstruct_szft(params, ws.obs_p[0], ws.obs_q[0],
                                        ws.wrench[0], steps=2)
        assert rec_p.shape == (4, 3) and rec_q.shape == (4, 4)

    def test_step_sequence(self):
        assert reverse_step_sequence(5, None) == [5, 4, 3, 2, 1]
        assert reverse_step_sequence(50, 3) == [50, 26, 1]
        with pytest.raises(ConfigError):
            reverse_step_sequence(5, 0)


class TestMetrics:
    def test_identical_zero(self):
        rng = np.random.default_rng(30)
        p = rng.normal(size=(10, 3))
        q = quat_canonical(rng.normal(size=(10, 4)))
        obs = quat_canonical(rng.normal(size=(10, 4)))
        m = metrics(p, q, p, q, obs)
        assert m.positional_mm == 0.0
        assert m.theta_deg == pytest.approx(0.0, abs=1e-9)
        # arccos near 1.0 leaves ~1e-8 deg of floating-point noise
        assert m.alpha_deg == pytest.approx(0.0, abs=1e-6)

    def test_uniform_offset_mm(self):
        p = np.zeros((5, 3))
        q = np.tile([1.0, 0, 0, 0], (5, 1))
        m = metrics(p + [0.001, 0, 0], q, p, q, q)
        assert m.positional_mm == pytest.approx(1.0)

    def test_theta_and_alpha_decomposition(self):
        # ground-truth displacement: 10 deg about z; predicted equilibrium
        # rotated so the displacement is 13 deg about z -> theta error 3 deg
        n = 4
        p = np.zeros((n, 3))
        obs_q = np.tile(quat_exp([0, 0, np.deg2rad(10.0)]), (n, 1))
        gt_q = np.tile([1.0, 0, 0, 0], (n, 1))
        pred_q = np.tile(quat_exp([0, 0, -np.deg2rad(3.0)]), (n, 1))
        m = metrics(p, pred_q, p, gt_q, obs_q)
        assert m.theta_deg == pytest.approx(3.0, abs=1e-9)
        assert m.alpha_deg == pytest.approx(0.0, abs=1e-9)
        # axis tilted: same magnitude, axis rotated 90 deg -> alpha = 90
        obs2 = np.tile(quat_exp([0, 0, np.deg2rad(10.0)]), (n, 1))
        pred2 = np.tile(
            quat_mul(quat_exp([0, 0, np.deg2rad(10.0)]),
                     quat_conj(quat_exp([np.deg2rad(10.0), 0, 0]))), (n, 1))
        m2 = metrics(p, pred2, p, gt_q, obs2)
        assert m2.alpha_deg == pytest.approx(90.0, abs=1e-6)

    def test_alpha_zero_when_magnitude_tiny(self):
        p = np.zeros((3, 3))
        q = np.tile([1.0, 0, 0, 0], (3, 1))
        m = metrics(p, q, p, q, q)  # zero rotations everywhere
        assert m.alpha_deg == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            metrics(np.zeros((3, 3)), np.tile([1.0, 0, 0, 0], (3, 1)),
                    np.zeros((4, 3)), np.tile([1.0, 0, 0, 0], (4, 1)),
                    np.tile([1.0, 0, 0, 0], (4, 1)))


class TestTrain:
    def test_overfit_memorizes(self):
        cfg = DenoiserConfig(hidden=16, heads=2, layers=1, tokens=4, steps=5,
                             sigma_gauss=0.0)
        ws = synthetic_windows(1, seed=40, episodes=1)
        tcfg = TrainConfig(lr=3e-3, batch_size=1, epochs=200, seed=0,
                           val_fraction=0.0)
        params, log = train(ws, cfg, tcfg)
        assert log[-1]["loss"] < 1e-3

    def test_seeded_runs_identical(self):
        cfg = DenoiserConfig(hidden=16, heads=2, layers=1, tokens=4, steps=5)
        ws = synthetic_windows(12, seed=41)
        tcfg = TrainConfig(lr=1e-3, batch_size=4, epochs=2, seed=7,
                           val_fraction=0.25, val_subset=8,
                           val_reverse_steps=2)
        p1, log1 = train(ws, cfg, tcfg)
        p2, log2 = train(ws, cfg, tcfg)
        for name in p1.tensors:
            np.testing.assert_array_equal(p1.tensors[name].data,
                                          p2.tensors[name].data)
        assert log1 == log2

    def test_empty_validation_split_rejected(self):
        cfg = DenoiserConfig(hidden=16, heads=2, layers=1, tokens=4, steps=5)
        ws = synthetic_windows(4, seed=42, episodes=1)
        tcfg = TrainConfig(epochs=1, val_fraction=0.2)
        with pytest.raises(ConfigError):
            train(ws, cfg, tcfg)

    def test_token_mismatch(self):
        ws = synthetic_windows(4, tokens=5, seed=43)
        with pytest.raises(ShapeError):
            train(ws, TINY, TrainConfig(epochs=1, val_fraction=0.25))

    def test_checkpoint_roundtrip(self, tmp_path):
        cfg = DenoiserConfig(hidden=16, heads=2, layers=1, tokens=4, steps=5)
        ws = synthetic_windows(8, seed=44)
        tcfg = TrainConfig(epochs=1, batch_size=4, seed=1, val_fraction=0.25,
                           val_subset=4, val_reverse_steps=2)
        path = tmp_path / "model.ckpt"
        params, _ = train(ws, cfg, tcfg, checkpoint_path=path)
        loaded = DenoiserParams.load(path)
        assert loaded.config == params.config
        # float32 storage: loaded weights match to f32 resolution
        for name in params.tensors:
            np.testing.assert_allclose(
                loaded.tensors[name].data, params.tensors[name].data,
                atol=1e-6, rtol=1e-6)
        # saving the loaded params reproduces the file byte-for-byte
        path2 = tmp_path / "model2.ckpt"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()
