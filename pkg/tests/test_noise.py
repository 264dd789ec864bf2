import numpy as np
import pytest

from zftlearn.errors import ConfigError
from zftlearn.geom import quat_angle, quat_canonical, quat_conj, quat_exp, quat_mul
from zftlearn.noise import (NoiseSchedule, corrupt_rotation,
                            corrupt_translation, make_schedule, snr)


class TestSchedule:
    def test_single_step(self):
        s = make_schedule("linear", T=1, beta_min=0.1, beta_max=0.1)
        np.testing.assert_allclose(s.alpha_bar, [0.9])

    def test_terminal_alpha_bar_matches_product_oracle(self):
        s = make_schedule("linear", T=1000, beta_min=1e-4, beta_max=0.02)
        oracle = 1.0
        for b in np.linspace(1e-4, 0.02, 1000):
            oracle *= 1.0 - b
        np.testing.assert_allclose(s.alpha_bar[-1], oracle, rtol=1e-12)
        assert abs(s.alpha_bar[-1] - 4.0e-5) < 1e-5

    def test_snr_strictly_decreasing(self):
        for kind in ("linear", "cosine"):
            s = make_schedule(kind, T=50)
            snrs = [snr(s, t) for t in range(1, 51)]
            assert all(a > b for a, b in zip(snrs, snrs[1:]))

    def test_default_terminal_noise(self):
        # default schedules must end essentially signal-free
        for kind in ("linear", "cosine"):
            s = make_schedule(kind, T=50)
            assert s.alpha_bar[-1] < 1e-3
            assert np.all((s.beta > 0) & (s.beta < 1))
            assert np.all(np.diff(s.alpha_bar) < 0)

    def test_noise_fraction_endpoints(self):
        s = make_schedule("cosine", T=50)
        assert s.noise_fraction(0) == 0.0
        assert 0.999 < s.noise_fraction(50) <= 1.0

    def test_invalid(self):
        with pytest.raises(ConfigError):
            make_schedule("linear", T=0)
        with pytest.raises(ConfigError):
            make_schedule("linear", T=10, beta_min=0.0, beta_max=0.1)
        with pytest.raises(ConfigError):
            make_schedule("linear", T=10, beta_min=0.5, beta_max=0.2)
        with pytest.raises(ConfigError):
            make_schedule("quadratic", T=10)

    def test_round_trip_dict(self):
        s = make_schedule("cosine", T=25)
        s2 = NoiseSchedule.from_dict(s.to_dict())
        np.testing.assert_array_equal(s.beta, s2.beta)
        np.testing.assert_allclose(s.alpha_bar, s2.alpha_bar)


class TestSnr:
    def test_values(self):
        s = make_schedule("linear", T=1, beta_min=0.5, beta_max=0.5)
        assert snr(s, 1) == pytest.approx(1.0)
        s = make_schedule("linear", T=1, beta_min=0.1, beta_max=0.1)
        assert snr(s, 1) == pytest.approx(9.0)

    def test_bounds(self):
        s = make_schedule("linear", T=5)
        with pytest.raises(ConfigError):
            snr(s, 0)
        with pytest.raises(ConfigError):
            snr(s, 6)

    def test_infinite_sentinel(self):
        s = NoiseSchedule(kind="linear", T=1, beta=np.array([0.0]),
                          alpha=np.array([1.0]), alpha_bar=np.array([1.0]))
        assert snr(s, 1) == np.inf


class TestCorruptTranslation:
    def test_zero_scale(self):
        p0 = np.array([0.1, 0.2, 0.3])
        p = np.array([0.15, 0.2, 0.3])
        noisy, _ = corrupt_translation(p0, p, 0.0, sigma_gauss=0.0)
        np.testing.assert_array_equal(noisy, p0)

    def test_full_scale_no_gauss(self):
        p0 = np.array([0.1, 0.2, 0.3])
        p = np.array([0.15, 0.25, 0.35])
        noisy, target = corrupt_translation(p0, p, 1.0, sigma_gauss=0.0)
        np.testing.assert_allclose(noisy, p)
        np.testing.assert_allclose(target, p - p0)

    def test_half_scale(self):
        noisy, _ = corrupt_translation(np.zeros(3), np.array([0.02, 0, 0]),
                                       0.5, sigma_gauss=0.0)
        np.testing.assert_allclose(noisy, [0.01, 0, 0])

    def test_affine_in_scale(self):
        p0 = np.array([0.0, 0.1, 0.0])
        p = np.array([0.03, 0.1, -0.02])
        for b in (0.25, 0.5, 0.75):
            noisy, _ = corrupt_translation(p0, p, b, sigma_gauss=0.0)
            np.testing.assert_allclose(noisy, p0 + b * (p - p0), atol=1e-15)

    def test_gauss_regularization(self):
        rng = np.random.default_rng(0)
        _, target = corrupt_translation(np.zeros(3), np.zeros(3), 1.0,
                                        sigma_gauss=0.001, rng=rng)
        assert 0.0 < np.linalg.norm(target) < 0.01

    def test_gauss_requires_rng(self):
        with pytest.raises(ConfigError):
            corrupt_translation(np.zeros(3), np.zeros(3), 1.0,
                                sigma_gauss=0.001, rng=None)


class TestCorruptRotation:
    def test_endpoints(self):
        q0 = np.array([1.0, 0, 0, 0])
        q = quat_exp([0, 0.4, 0])
        noisy0, _ = corrupt_rotation(q0, q, 0.0)
        noisy1, target = corrupt_rotation(q0, q, 1.0)
        np.testing.assert_allclose(noisy0, q0, atol=1e-15)
        np.testing.assert_allclose(noisy1, q, atol=1e-12)
        np.testing.assert_allclose(
            target, quat_canonical(quat_mul(q, quat_conj(q0))), atol=1e-15)

    def test_half_scale_slerp_oracle(self):
        q0 = np.array([1.0, 0, 0, 0])
        q = quat_exp([0, 0, np.pi / 2])
        noisy, _ = corrupt_rotation(q0, q, 0.5)
        np.testing.assert_allclose(noisy, quat_exp([0, 0, np.pi / 4]),
                                   atol=1e-12)

    def test_unit_norm_bulk(self):
        rng = np.random.default_rng(1)
        q0 = quat_canonical(rng.normal(size=(5000, 4)))
        q = quat_canonical(rng.normal(size=(5000, 4)))
        noisy, _ = corrupt_rotation(q0, q, 0.37)
        assert np.abs(np.linalg.norm(noisy, axis=1) - 1).max() < 1e-12

    def test_geodesic_fraction(self):
        rng = np.random.default_rng(2)
        q0 = quat_canonical(rng.normal(size=(500, 4)))
        q = quat_canonical(rng.normal(size=(500, 4)))
        b = 0.4
        noisy, _ = corrupt_rotation(q0, q, b)
        full = quat_angle(q0, q)
        keep = full > 1e-4
        np.testing.assert_allclose(quat_angle(q0, noisy)[keep],
                                   b * full[keep], atol=1e-9)

    def test_tangent_regularization_flag(self):
        rng = np.random.default_rng(3)
        q0 = np.array([1.0, 0, 0, 0])
        q = quat_exp([0.1, 0, 0])
        _, t_off = corrupt_rotation(q0, q, 1.0)
        _, t_on = corrupt_rotation(q0, q, 1.0, sigma_rot=0.01, rng=rng)
        assert np.linalg.norm(t_on - t_off) > 1e-6
        np.testing.assert_allclose(np.linalg.norm(t_on), 1.0, atol=1e-12)


def test_chain_matches_marginal_distribution():
    """Iterating the per-step Gaussian chain for t steps must match the
    closed-form marginal in mean and variance (Monte-Carlo, 3 sigma)."""
    s = make_schedule("linear", T=10, beta_min=0.05, beta_max=0.3)
    rng = np.random.default_rng(4)
    n = 100_000
    z0 = 1.0
    z = np.full(n, z0)
    for t in range(s.T):
        eps = rng.normal(size=n)
        z = np.sqrt(s.alpha[t]) * z + np.sqrt(s.beta[t]) * eps
    want_mean = np.sqrt(s.alpha_bar[-1]) * z0
    want_var = 1.0 - s.alpha_bar[-1]
    mean_tol = 3.0 * np.sqrt(want_var / n)
    var_tol = 3.0 * want_var * np.sqrt(2.0 / (n - 1))
    assert abs(z.mean() - want_mean) < mean_tol
    assert abs(z.var() - want_var) < var_tol
