import math

import numpy as np
import pytest

from fedsim import privacy
from fedsim.errors import ConfigError


class TestSensitivity:
    def test_small_config(self):
        cfg = privacy.PrivacyConfig(epsilon=1.0, n=2, k=1, alpha_reg=1.0)
        assert privacy.sensitivity(cfg) == 1.0

    def test_large_config(self):
        cfg = privacy.PrivacyConfig(epsilon=1.0, n=100, k=1000, alpha_reg=1.0)
        assert privacy.sensitivity(cfg) == pytest.approx(2e-5)

    def test_doubling_n_halves_sensitivity(self):
        base = privacy.PrivacyConfig(epsilon=1.0, n=10, k=50, alpha_reg=0.5)
        doubled = privacy.PrivacyConfig(epsilon=1.0, n=20, k=50, alpha_reg=0.5)
        assert doubled.sensitivity == pytest.approx(base.sensitivity / 2)

    def test_nonpositive_parameters_rejected(self):
        for bad in (dict(epsilon=0.0), dict(n=0), dict(k=-1), dict(alpha_reg=0.0)):
            cfg = dict(epsilon=1.0, n=2, k=3, alpha_reg=1.0)
            cfg.update(bad)
            with pytest.raises(ConfigError):
                privacy.PrivacyConfig(**cfg)

    def test_reported_scale(self):
        # b = 2 / (n k alpha eps): the reference operating point gives 0.4.
        cfg = privacy.PrivacyConfig(epsilon=5e-5, n=100, k=1000, alpha_reg=1.0)
        assert cfg.scale == pytest.approx(0.4)


class _FixedUniform:
    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        return self.value if size is None else np.full(size, self.value)


class TestLaplaceSample:
    def test_median_draw_gives_zero(self):
        assert privacy.laplace_sample(1.0, _FixedUniform(0.5)) == 0.0

    def test_inverse_cdf_at_09(self):
        sample = privacy.laplace_sample(1.0, _FixedUniform(0.9))
        assert sample == pytest.approx(-math.log(0.2), rel=1e-12)

    def test_empirical_mean_absolute(self):
        rng = np.random.default_rng(21)
        cfg = privacy.PrivacyConfig(epsilon=5e-5, n=100, k=1000, alpha_reg=1.0)
        draws = privacy.make_noise(cfg, 1_000_000, rng).values
        assert 0.392 <= np.mean(np.abs(draws)) <= 0.408

    def test_scale_must_be_positive(self):
        with pytest.raises(ConfigError):
            privacy.laplace_sample(0.0, np.random.default_rng(0))


class TestMakeNoise:
    def test_huge_epsilon_gives_negligible_noise(self):
        cfg = privacy.PrivacyConfig(epsilon=1e9, n=2, k=10, alpha_reg=1.0)
        noise = privacy.make_noise(cfg, 31, np.random.default_rng(1))
        assert np.max(np.abs(noise.values)) < 1e-6

    def test_reference_scale_value(self):
        cfg = privacy.PrivacyConfig(epsilon=5e-5, n=100, k=1000, alpha_reg=1.0)
        assert cfg.scale == pytest.approx(0.4)

    def test_same_rng_state_reproduces(self):
        cfg = privacy.PrivacyConfig(epsilon=1.0, n=3, k=5, alpha_reg=1.0)
        a = privacy.make_noise(cfg, 8, np.random.default_rng(9)).values
        b = privacy.make_noise(cfg, 8, np.random.default_rng(9)).values
        assert np.array_equal(a, b)

    def test_distinct_positions_differ(self):
        cfg = privacy.PrivacyConfig(epsilon=1.0, n=3, k=5, alpha_reg=1.0)
        rng = np.random.default_rng(2)
        first = privacy.make_noise(cfg, 8, rng).values
        second = privacy.make_noise(cfg, 8, rng).values
        assert not np.array_equal(first, second)

    def test_length(self):
        cfg = privacy.PrivacyConfig(epsilon=1.0, n=3, k=5, alpha_reg=1.0)
        assert privacy.make_noise(cfg, 31, np.random.default_rng(0)).values.shape == (31,)


class TestCalibrationProperties:
    @pytest.mark.parametrize("scale", [0.04, 0.4, 4.0])
    def test_mean_abs_within_two_percent(self, scale):
        rng = np.random.default_rng(int(scale * 1000) + 5)
        u = rng.random(1_000_000)
        draws = privacy._inverse_cdf(u, scale)
        assert abs(np.mean(np.abs(draws)) - scale) < 0.02 * scale

    @pytest.mark.parametrize("scale", [0.04, 0.4, 4.0])
    def test_median_near_zero(self, scale):
        rng = np.random.default_rng(int(scale * 1000) + 11)
        u = rng.random(1_000_000)
        draws = privacy._inverse_cdf(u, scale)
        assert abs(np.median(draws)) <= 0.01 * scale

    def test_smaller_epsilon_larger_scale(self):
        scales = [privacy.PrivacyConfig(epsilon=e, n=10, k=10, alpha_reg=1.0).scale
                  for e in (1e-2, 1e-3, 1e-4)]
        assert scales[0] < scales[1] < scales[2]
