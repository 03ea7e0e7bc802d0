import csv
import json

import numpy as np
import pytest

from cfgnn.errors import DomainError, ShapeMismatchError
from cfgnn.metrics import (
    batch_sum_se,
    empirical_cdf,
    per_ap_power,
    power_violations,
    se_report,
    sinr,
    sum_se,
    summarize,
    write_cdf_csv,
    write_summary_json,
)

from oracles import loop_sinr, loop_sum_se


def random_hf(gen, l, k, n):
    h = gen.normal(size=(l, k, n)) + 1j * gen.normal(size=(l, k, n))
    f = gen.normal(size=(l, k, n)) + 1j * gen.normal(size=(l, k, n))
    return h, f


class TestSinr:
    def test_matches_loop_oracle(self):
        gen = np.random.default_rng(0)
        for _ in range(10):
            l, k, n = gen.integers(1, 4), gen.integers(1, 5), gen.integers(1, 4)
            h, f = random_hf(gen, l, k, n)
            noise = float(gen.uniform(0.1, 2.0))
            np.testing.assert_allclose(sinr(h, f, noise), loop_sinr(h, f, noise), rtol=1e-10)
            assert sum_se(h, f, noise) == pytest.approx(loop_sum_se(h, f, noise), rel=1e-10)

    def test_single_user_matched_beam(self):
        """K=1 with per-AP matched beams at power p: the received amplitudes
        add coherently, SINR = p * (sum_j ||h_j||)^2 / noise."""
        gen = np.random.default_rng(1)
        h = gen.normal(size=(3, 1, 2)) + 1j * gen.normal(size=(3, 1, 2))
        p, noise = 2.5, 0.7
        norms = np.linalg.norm(h[:, 0, :], axis=1)
        f = np.sqrt(p) * h / norms[:, None, None]
        want = p * norms.sum() ** 2 / noise
        assert sinr(h, f, noise)[0] == pytest.approx(want, rel=1e-12)

    def test_zero_precoder_gives_zero_se(self):
        gen = np.random.default_rng(2)
        h, _ = random_hf(gen, 2, 3, 2)
        report = se_report(h, np.zeros_like(h), 1.0)
        np.testing.assert_array_equal(report.se, 0.0)
        assert report.sum_se == 0.0

    def test_two_axis_inputs_are_single_cell(self):
        gen = np.random.default_rng(3)
        h, f = random_hf(gen, 1, 3, 4)
        np.testing.assert_allclose(
            sinr(h[0], f[0], 0.5), sinr(h, f, 0.5), rtol=1e-14
        )

    def test_sum_consistency(self):
        gen = np.random.default_rng(4)
        h, f = random_hf(gen, 2, 4, 3)
        report = se_report(h, f, 0.3)
        assert abs(report.sum_se - report.se.sum()) <= 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            sinr(np.ones((2, 2, 2), complex), np.ones((2, 3, 2), complex), 1.0)
        with pytest.raises(ShapeMismatchError):
            sinr(np.ones(4, complex), np.ones(4, complex), 1.0)

    def test_positive_noise_required(self):
        h = np.ones((1, 1, 1), complex)
        with pytest.raises(DomainError):
            sinr(h, h, 0.0)

    def test_batch_matches_scalar_path(self):
        gen = np.random.default_rng(5)
        hs = gen.normal(size=(6, 2, 3, 2)) + 1j * gen.normal(size=(6, 2, 3, 2))
        fs = gen.normal(size=(6, 2, 3, 2)) + 1j * gen.normal(size=(6, 2, 3, 2))
        batch = batch_sum_se(hs, fs, 0.8)
        singles = [sum_se(hs[i], fs[i], 0.8) for i in range(6)]
        np.testing.assert_allclose(batch, singles, rtol=1e-12)


class TestPower:
    def test_per_ap_power_loop_oracle(self):
        gen = np.random.default_rng(6)
        _, f = random_hf(gen, 3, 2, 4)
        want = np.zeros(3)
        for j in range(3):
            for k in range(2):
                for n in range(4):
                    want[j] += abs(f[j, k, n]) ** 2
        np.testing.assert_allclose(per_ap_power(f), want, rtol=1e-12)

    def test_violations_tolerance(self):
        f = np.zeros((2, 1, 1), complex)
        f[0, 0, 0] = 1.0
        f[1, 0, 0] = np.sqrt(1.0 + 1e-7)
        flags = power_violations(f, 1.0, rtol=1e-6)
        assert flags.tolist() == [False, False]
        flags = power_violations(f, 1.0, rtol=1e-8)
        assert flags.tolist() == [False, True]


class TestDistribution:
    def test_empirical_cdf_steps(self):
        xs, ps = empirical_cdf(np.array([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(xs, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(ps, [1 / 3, 2 / 3, 1.0])

    def test_cdf_reaches_one_with_duplicates(self):
        xs, ps = empirical_cdf(np.array([2.0, 2.0, 5.0, 5.0]))
        assert ps[-1] == 1.0
        assert np.all(np.diff(xs) >= 0)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            empirical_cdf(np.array([]))

    def test_summary_fields(self):
        values = np.arange(1.0, 101.0)
        s = summarize(values)
        assert s["count"] == 100
        assert s["mean"] == pytest.approx(50.5)
        assert s["median"] == pytest.approx(50.5)
        assert s["p05"] == pytest.approx(np.percentile(values, 5))

    def test_csv_round_trip(self, tmp_path):
        values = np.array([0.5, 1.25, 0.75])
        path = tmp_path / "cdf.csv"
        write_cdf_csv(path, values)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["value", "cdf"]
        got = np.array([[float(a), float(b)] for a, b in rows[1:]])
        np.testing.assert_allclose(got[:, 0], [0.5, 0.75, 1.25])
        np.testing.assert_allclose(got[:, 1], [1 / 3, 2 / 3, 1.0])

    def test_summary_json(self, tmp_path):
        path = tmp_path / "summary.json"
        write_summary_json(path, np.array([1.0, 2.0, 3.0]))
        data = json.loads(path.read_text())
        assert set(data) == {"count", "mean", "median", "p05"}
