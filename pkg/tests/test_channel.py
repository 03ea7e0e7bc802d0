import math

import numpy as np
import pytest
import scipy.stats

from cfgnn import rng
from cfgnn.channel import (
    Scenario,
    ScenarioConfig,
    SVChannelConfig,
    correlation_roots,
    generate_scenario,
    path_gain_db,
    sample_rayleigh,
    sample_sv,
    steering_vectors,
)
from cfgnn.errors import ConfigError

# Frozen oracle values, derived by hand from the log-distance model with a
# 10 m height offset: gain(d) = -30.5 - 36.7 * log10(sqrt(d^2 + 100)).
PATH_GAIN_AT_0 = -67.2
PATH_GAIN_AT_100 = -103.97929720891149
PATH_GAIN_AT_500 = -129.55538624325473


class TestPathGain:
    def test_frozen_values(self):
        assert path_gain_db(0.0) == pytest.approx(PATH_GAIN_AT_0, abs=1e-9)
        assert path_gain_db(100.0) == pytest.approx(PATH_GAIN_AT_100, abs=1e-9)
        assert path_gain_db(500.0) == pytest.approx(PATH_GAIN_AT_500, abs=1e-9)

    def test_monotone_decreasing(self):
        d = np.linspace(0, 1500, 200)
        g = path_gain_db(d)
        assert np.all(np.diff(g) < 0)


class TestScenario:
    def test_reproducible_and_in_area(self):
        config = ScenarioConfig(num_aps=5, num_ues=4, num_antennas=2, area_side_m=400.0)
        s1 = generate_scenario(config, seed=11)
        s2 = generate_scenario(config, seed=11)
        assert np.array_equal(s1.ap_positions, s2.ap_positions)
        assert np.array_equal(s1.large_scale, s2.large_scale)
        assert s1.ap_positions.min() >= 0 and s1.ap_positions.max() < 400.0
        assert s1.ue_positions.min() >= 0 and s1.ue_positions.max() < 400.0

    def test_large_scale_matches_geometry(self):
        config = ScenarioConfig(num_aps=3, num_ues=2, num_antennas=1)
        s = generate_scenario(config, seed=0)
        d = np.linalg.norm(s.ap_positions[1] - s.ue_positions[0])
        want = 10.0 ** (path_gain_db(d) / 10.0)
        assert s.large_scale[1, 0] == pytest.approx(want, rel=1e-12)

    def test_seed_changes_layout(self):
        config = ScenarioConfig(num_aps=3, num_ues=2, num_antennas=1)
        a = generate_scenario(config, seed=1)
        b = generate_scenario(config, seed=2)
        assert not np.array_equal(a.ap_positions, b.ap_positions)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(num_aps=0).validate()
        with pytest.raises(ConfigError):
            ScenarioConfig(noise_power_mw=0.0).validate()
        with pytest.raises(ConfigError):
            ScenarioConfig(correlation="isotropic").validate()


class TestRayleigh:
    def test_mean_power_matches_large_scale(self):
        """Monte-Carlo oracle: E|h_jkn|^2 equals the large-scale gain."""
        config = ScenarioConfig(num_aps=2, num_ues=2, num_antennas=2)
        scenario = generate_scenario(config, seed=3)
        draws = 4000
        acc = np.zeros(config.link_shape)
        for i in range(draws):
            h = sample_rayleigh(scenario, config, rng.stream(3, rng.SAMPLE_TAG, i)).gains
            acc += np.abs(h) ** 2
        ratio = (acc / draws) / scenario.large_scale[:, :, None]
        np.testing.assert_allclose(ratio, 1.0, atol=0.12)

    def test_reproducible(self):
        config = ScenarioConfig(num_aps=2, num_ues=2, num_antennas=3)
        scenario = generate_scenario(config, seed=4)
        h1 = sample_rayleigh(scenario, config, rng.stream(4, rng.SAMPLE_TAG, 7)).gains
        h2 = sample_rayleigh(scenario, config, rng.stream(4, rng.SAMPLE_TAG, 7)).gains
        assert np.array_equal(h1, h2)

    def test_local_scattering_covariance(self):
        """Sample covariance over draws approaches beta * R."""
        config = ScenarioConfig(
            num_aps=1, num_ues=1, num_antennas=4,
            correlation="local-scattering", angular_spread_deg=20.0,
        )
        scenario = generate_scenario(config, seed=5)
        roots = correlation_roots(scenario, config)
        r_target = roots[0, 0] @ roots[0, 0].conj().T
        draws = 6000
        cov = np.zeros((4, 4), dtype=complex)
        for i in range(draws):
            h = sample_rayleigh(scenario, config, rng.stream(5, rng.SAMPLE_TAG, i), roots).gains
            v = h[0, 0]
            cov += np.outer(v, v.conj())
        cov /= draws * scenario.large_scale[0, 0]
        assert np.max(np.abs(cov - r_target)) < 0.1

    def test_correlation_unit_diagonal(self):
        config = ScenarioConfig(
            num_aps=2, num_ues=3, num_antennas=5,
            correlation="local-scattering", angular_spread_deg=10.0,
        )
        scenario = generate_scenario(config, seed=6)
        roots = correlation_roots(scenario, config)
        r = np.einsum("jkab,jkcb->jkac", roots, roots.conj())
        diag = np.einsum("jkaa->jka", r)
        np.testing.assert_allclose(diag.real, 1.0, atol=1e-10)
        np.testing.assert_allclose(diag.imag, 0.0, atol=1e-10)


class TestClusterRay:
    def test_steering_unit_norm(self):
        a = steering_vectors(np.array([0.3, -0.7]), 16)
        np.testing.assert_allclose(np.linalg.norm(a, axis=-1), 1.0, rtol=1e-12)

    def test_mean_total_power_is_nt(self):
        config = SVChannelConfig(num_ues=2, num_antennas=16)
        draws = 3000
        total = 0.0
        for i in range(draws):
            h = sample_sv(config, rng.stream(7, rng.SAMPLE_TAG, i))
            total += np.mean(np.sum(np.abs(h) ** 2, axis=1))
        assert total / draws == pytest.approx(16.0, rel=0.05)

    def test_single_antenna_magnitude_is_rayleigh(self):
        """With Nt=1 the ray sum collapses to one unit gaussian, so |h| is
        Rayleigh with sigma^2 = 1/2; checked by a KS test."""
        config = SVChannelConfig(num_ues=1, num_antennas=1)
        mags = np.empty(10_000)
        for i in range(mags.size):
            mags[i] = np.abs(sample_sv(config, rng.stream(8, rng.SAMPLE_TAG, i))[0, 0])
        stat = scipy.stats.kstest(mags, lambda x: 1.0 - np.exp(-np.square(x)))
        assert stat.pvalue > 0.01

    def test_reproducible(self):
        config = SVChannelConfig()
        h1 = sample_sv(config, rng.stream(9, rng.SAMPLE_TAG, 0))
        h2 = sample_sv(config, rng.stream(9, rng.SAMPLE_TAG, 0))
        assert np.array_equal(h1, h2)

    def test_validation(self):
        with pytest.raises(ConfigError):
            SVChannelConfig(num_clusters=0).validate()
        with pytest.raises(ConfigError):
            SVChannelConfig(array="upa").validate()
