"""Seeded stream behavior and distributional properties of the samplers.

Statistical assertions run on large fixed-seed draws; tolerances are the
contract values (variance bands, 3 robust standard errors, tail slope band).
"""

import numpy as np
import pytest

from decopt.noise import (
    PURPOSE_BATCH,
    PURPOSE_DATASET,
    PURPOSE_NOISE,
    NoiseSpec,
    RngStream,
    cms_transform,
    empirical_moment,
    gaussian_pairs,
    robust_mean,
    sample,
    sample_alpha_stable,
    sample_gaussian,
    sample_student_t,
    tail_slope,
)


class TestRngStream:
    def test_replay_identical(self):
        a = RngStream(42, 3).uniform(1000)
        b = RngStream(42, 3).uniform(1000)
        np.testing.assert_array_equal(a, b)

    def test_nodes_decorrelated(self):
        a = RngStream(42, 0).uniform(1000)
        b = RngStream(42, 1).uniform(1000)
        assert not np.array_equal(a, b)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_seeds_decorrelated(self):
        a = RngStream(1, 0).uniform(1000)
        b = RngStream(2, 0).uniform(1000)
        assert not np.array_equal(a, b)

    def test_purpose_channels_distinct(self):
        a = RngStream(7, 0, purpose=PURPOSE_NOISE).uniform(100)
        b = RngStream(7, 0, purpose=PURPOSE_DATASET).uniform(100)
        c = RngStream(7, 0, purpose=PURPOSE_BATCH).uniform(100)
        assert not np.array_equal(a, b)
        assert not np.array_equal(b, c)

    def test_repeat_channels_distinct(self):
        a = RngStream(7, 0, repeat=0).uniform(100)
        b = RngStream(7, 0, repeat=1).uniform(100)
        assert not np.array_equal(a, b)

    def test_interleaving_immaterial(self):
        """A stream's output depends only on its own draw count."""
        s1 = RngStream(9, 0)
        other = RngStream(9, 1)
        first = s1.uniform(10)
        other.uniform(57)  # progress an unrelated stream
        second = s1.uniform(10)
        fresh = RngStream(9, 0)
        np.testing.assert_array_equal(np.concatenate([first, second]), fresh.uniform(20))

    def test_draw_counter_advances(self):
        s = RngStream(1, 0)
        assert s.draws == 0
        s.uniform(5)
        assert s.draws == 5


class TestGaussian:
    def test_zero_variance_is_zero_vector(self):
        spec = NoiseSpec(family="gaussian", dim=8, variance=0.0)
        np.testing.assert_array_equal(sample(spec, RngStream(0, 0)), np.zeros(8))

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(family="gaussian", dim=4, variance=-1.0)

    def test_variance_three(self):
        """1e6 draws at sigma^2 = 3 concentrate the sample variance near 3."""
        spec = NoiseSpec(family="gaussian", dim=10**6, variance=3.0)
        x = sample(spec, RngStream(101, 0))
        assert abs(x.var() - 3.0) < 0.02

    def test_determinism(self):
        spec = NoiseSpec(family="gaussian", dim=32, variance=2.0)
        a = sample(spec, RngStream(5, 2))
        b = sample(spec, RngStream(5, 2))
        np.testing.assert_array_equal(a, b)

    def test_box_muller_moments(self):
        z = gaussian_pairs(RngStream(77, 0), 400_000)
        se = 1.0 / np.sqrt(z.size)
        assert abs(z.mean()) < 4 * se
        assert abs(z.var() - 1.0) < 0.01
        # standardized fourth moment of a Gaussian is 3
        assert abs((z**4).mean() - 3.0) < 0.1

    def test_zero_mean_contract(self):
        spec = NoiseSpec(family="gaussian", dim=10**6, variance=3.0)
        x = sample(spec, RngStream(11, 0))
        _, se = robust_mean(x)
        assert abs(x.mean()) <= 3.0 * se


class TestStudentT:
    def test_dof_must_exceed_one(self):
        with pytest.raises(ValueError):
            NoiseSpec(family="student-t", dim=4, dof=1.0)
        with pytest.raises(ValueError):
            NoiseSpec(family="student-t", dim=4, dof=0.5)

    def test_zero_scale_is_zero_vector(self):
        spec = NoiseSpec(family="student-t", dim=6, dof=1.5, scale=0.0)
        np.testing.assert_array_equal(sample(spec, RngStream(0, 0)), np.zeros(6))

    def test_zero_mean_contract(self):
        spec = NoiseSpec(family="student-t", dim=10**6, dof=1.5, scale=1.0)
        x = sample(spec, RngStream(13, 0))
        _, se = robust_mean(x)
        assert abs(x.mean()) <= 3.0 * se

    def test_moment_ladder(self):
        """p = 1.2 moment settles as draws accumulate; p = 2 keeps climbing.

        Single-seed heavy-tail estimates wobble decade to decade, so growth is
        judged across a 100x span where the trend dominates the wobble.
        """
        spec = NoiseSpec(family="student-t", dim=10**6, dof=1.5, scale=1.0)
        x = sample(spec, RngStream(29, 0))
        p_small = empirical_moment(x[: 10**5], 1.2)
        p_large = empirical_moment(x, 1.2)
        assert abs(p_large - p_small) / p_small < 0.25
        assert empirical_moment(x, 2.0) > 2.0 * empirical_moment(x[: 10**4], 2.0)

    def test_heavier_than_gaussian(self):
        spec = NoiseSpec(family="student-t", dim=10**5, dof=1.5, scale=1.0)
        x = sample(spec, RngStream(31, 0))
        assert np.abs(x).max() > 50.0

    def test_determinism(self):
        spec = NoiseSpec(family="student-t", dim=16, dof=2.5, scale=0.7)
        np.testing.assert_array_equal(sample(spec, RngStream(3, 1)), sample(spec, RngStream(3, 1)))


class TestAlphaStable:
    def test_parameter_domain(self):
        with pytest.raises(ValueError):
            NoiseSpec(family="alpha-stable", dim=4, alpha=1.0)
        with pytest.raises(ValueError):
            NoiseSpec(family="alpha-stable", dim=4, alpha=2.5)
        with pytest.raises(ValueError):
            NoiseSpec(family="alpha-stable", dim=4, alpha=1.5, skew=1.5)
        with pytest.raises(ValueError):
            NoiseSpec(family="alpha-stable", dim=4, alpha=1.5, scale=-1.0)

    def test_transform_spot_check(self):
        """Forced inputs U = 0, E = 1, no skew: sin(0) makes the output 0."""
        out = cms_transform(np.array([0.0]), np.array([1.0]), 1.5, 0.0, 1.0)
        assert out[0] == 0.0

    def test_alpha_two_is_gaussian(self):
        """At the stability boundary the law is Normal(0, 2 gamma^2)."""
        spec = NoiseSpec(family="alpha-stable", dim=10**6, alpha=2.0, skew=0.0, scale=1.0)
        x = sample(spec, RngStream(41, 0))
        assert abs(x.var() - 2.0) < 0.02

    def test_alpha_two_skew_is_inert(self):
        a = sample(NoiseSpec(family="alpha-stable", dim=100, alpha=2.0, skew=0.0), RngStream(4, 0))
        b = sample(NoiseSpec(family="alpha-stable", dim=100, alpha=2.0, skew=0.9), RngStream(4, 0))
        np.testing.assert_array_equal(a, b)

    def test_zero_mean_contract(self):
        spec = NoiseSpec(
            family="alpha-stable", dim=10**6, alpha=1.5, skew=0.5, scale=1.0, multiplier=0.1
        )
        x = sample(spec, RngStream(17, 0))
        _, se = robust_mean(x)
        assert abs(x.mean()) <= 3.0 * se

    def test_tail_slope(self):
        spec = NoiseSpec(family="alpha-stable", dim=10**6, alpha=1.5, skew=0.5, scale=1.0)
        x = sample(spec, RngStream(17, 0))
        assert abs(tail_slope(x) - (-1.5)) < 0.15

    def test_moment_ladder(self):
        spec = NoiseSpec(family="alpha-stable", dim=10**6, alpha=1.5, skew=0.5, scale=1.0)
        x = sample(spec, RngStream(23, 0))
        p_small = empirical_moment(x[: 10**5], 1.2)
        p_large = empirical_moment(x, 1.2)
        assert abs(p_large - p_small) / p_small < 0.25
        assert empirical_moment(x, 2.0) > 2.0 * empirical_moment(x[: 10**4], 2.0)

    def test_multiplier_scales_output(self):
        spec1 = NoiseSpec(family="alpha-stable", dim=64, alpha=1.5, skew=0.5, multiplier=1.0)
        spec2 = NoiseSpec(family="alpha-stable", dim=64, alpha=1.5, skew=0.5, multiplier=0.1)
        a = sample(spec1, RngStream(2, 0))
        b = sample(spec2, RngStream(2, 0))
        np.testing.assert_allclose(b, 0.1 * a, rtol=1e-15)


class TestNoneFamily:
    def test_zero_vector_no_draws(self):
        spec = NoiseSpec(family="none", dim=12)
        stream = RngStream(0, 0)
        np.testing.assert_array_equal(sample(spec, stream), np.zeros(12))
        assert stream.draws == 0

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(family="cauchy", dim=4)


class TestDiagnostics:
    def test_moment_all_zero(self):
        assert empirical_moment(np.zeros(10), 1.5) == 0.0

    def test_moment_single_vector_p1(self):
        v = np.array([[3.0, 4.0]])
        assert empirical_moment(v, 1.0) == pytest.approx(5.0, abs=1e-15)

    def test_moment_gaussian_second(self):
        x = gaussian_pairs(RngStream(59, 0), 10**6)
        assert abs(empirical_moment(x, 2.0) - 1.0) < 0.01

    def test_moment_rejects_empty(self):
        with pytest.raises(ValueError):
            empirical_moment(np.array([]), 1.5)

    def test_tail_slope_pareto(self):
        """Synthetic Pareto(a) magnitudes give survival slope -a."""
        u = RngStream(61, 0).uniform(10**6)
        for a in (1.2, 1.8):
            x = (1.0 - u) ** (-1.0 / a)
            assert abs(tail_slope(x) - (-a)) < 0.1

    def test_tail_slope_needs_enough_points(self):
        with pytest.raises(ValueError):
            tail_slope(np.ones(50))

    def test_robust_mean_recovers_center(self):
        x = gaussian_pairs(RngStream(67, 0), 10**5) + 2.0
        center, se = robust_mean(x)
        assert abs(center - 2.0) < 5 * se

    def test_robust_mean_needs_enough_samples(self):
        with pytest.raises(ValueError):
            robust_mean(np.ones(10), n_blocks=100)
