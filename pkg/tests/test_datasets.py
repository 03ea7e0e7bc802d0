import json

import numpy as np
import pytest

from cfgnn.channel import ScenarioConfig, SVChannelConfig
from cfgnn.datasets import (
    MANIFEST_NAME,
    PAYLOAD_NAME,
    Dataset,
    generate_power_control,
    generate_precoding,
    read_dataset,
    write_dataset,
)
from cfgnn.errors import (
    ChecksumError,
    ConfigError,
    FormatVersionError,
    MissingArtifactError,
    TruncatedPayloadError,
)

PC_CONFIG = ScenarioConfig(num_aps=3, num_ues=2, num_antennas=2, area_side_m=300.0)
SV_CONFIG = SVChannelConfig(num_ues=2, num_antennas=4)


class TestGeneration:
    def test_power_control_shape_and_determinism(self):
        a = generate_power_control(PC_CONFIG, 5, seed=42)
        b = generate_power_control(PC_CONFIG, 5, seed=42)
        assert a.samples.shape == (5, 3, 2, 2)
        assert a.samples.dtype == np.complex64
        assert np.array_equal(a.samples, b.samples)
        assert np.array_equal(a.scenario.large_scale, b.scenario.large_scale)

    def test_fixed_geometry_varying_fading(self):
        ds = generate_power_control(PC_CONFIG, 3, seed=0)
        assert not np.array_equal(ds.samples[0], ds.samples[1])

    def test_seed_changes_samples(self):
        a = generate_power_control(PC_CONFIG, 2, seed=1)
        b = generate_power_control(PC_CONFIG, 2, seed=2)
        assert not np.array_equal(a.samples, b.samples)

    def test_precoding_shape(self):
        ds = generate_precoding(SV_CONFIG, 4, seed=3)
        assert ds.samples.shape == (4, 2, 4)
        assert ds.scenario is None

    def test_sample_streams_are_order_free(self):
        """Sample i depends only on (seed, i): a larger run extends a
        smaller one, which is what makes parallel generation exact."""
        small = generate_power_control(PC_CONFIG, 3, seed=9)
        large = generate_power_control(PC_CONFIG, 6, seed=9)
        assert np.array_equal(large.samples[:3], small.samples)

    def test_negative_count_rejected(self):
        with pytest.raises(ConfigError):
            generate_power_control(PC_CONFIG, -1, seed=0)

    def test_subset(self):
        ds = generate_precoding(SV_CONFIG, 4, seed=3)
        sub = ds.subset(2)
        assert np.array_equal(sub.samples, ds.samples[:2])
        with pytest.raises(ConfigError):
            ds.subset(5)


class TestRoundTrip:
    def test_power_control_bit_identical(self, tmp_path):
        ds = generate_power_control(PC_CONFIG, 6, seed=7)
        write_dataset(ds, tmp_path / "d")
        back = read_dataset(tmp_path / "d")
        assert back.kind == ds.kind
        assert back.seed == ds.seed
        assert back.config == ds.config
        assert np.array_equal(back.samples, ds.samples)
        assert np.array_equal(back.scenario.ap_positions, ds.scenario.ap_positions)
        assert np.array_equal(back.scenario.large_scale, ds.scenario.large_scale)

    def test_precoding_bit_identical(self, tmp_path):
        ds = generate_precoding(SV_CONFIG, 5, seed=8)
        write_dataset(ds, tmp_path / "d")
        back = read_dataset(tmp_path / "d")
        assert back.config == ds.config
        assert back.scenario is None
        assert np.array_equal(back.samples, ds.samples)

    def test_empty_dataset_round_trips(self, tmp_path):
        ds = generate_precoding(SV_CONFIG, 0, seed=1)
        write_dataset(ds, tmp_path / "d")
        back = read_dataset(tmp_path / "d")
        assert back.sample_count == 0
        assert back.samples.shape == (0, 2, 4)

    def test_manifest_echoes_config(self, tmp_path):
        ds = generate_power_control(PC_CONFIG, 2, seed=5)
        write_dataset(ds, tmp_path / "d")
        manifest = json.loads((tmp_path / "d" / MANIFEST_NAME).read_text())
        assert manifest["format_version"] == 1
        assert manifest["kind"] == "power-control"
        assert manifest["seed"] == 5
        assert manifest["sample_count"] == 2
        assert manifest["config"]["num_aps"] == 3
        assert manifest["config"]["noise_power_mw"] == PC_CONFIG.noise_power_mw

    def test_wire_layout_is_interleaved_f32(self, tmp_path):
        ds = generate_precoding(SV_CONFIG, 1, seed=2)
        write_dataset(ds, tmp_path / "d")
        raw = np.frombuffer((tmp_path / "d" / PAYLOAD_NAME).read_bytes(), dtype="<f4")
        flat = ds.samples.ravel()
        np.testing.assert_array_equal(raw[0::2], flat.real.astype("<f4"))
        np.testing.assert_array_equal(raw[1::2], flat.imag.astype("<f4"))


class TestCorruptionDetection:
    def _write(self, tmp_path):
        ds = generate_power_control(PC_CONFIG, 3, seed=11)
        return write_dataset(ds, tmp_path / "d")

    def test_flipped_byte_fails_checksum(self, tmp_path):
        d = self._write(tmp_path)
        payload = bytearray((d / PAYLOAD_NAME).read_bytes())
        payload[5] ^= 0xFF
        (d / PAYLOAD_NAME).write_bytes(bytes(payload))
        with pytest.raises(ChecksumError):
            read_dataset(d)

    def test_truncation_detected_before_checksum(self, tmp_path):
        d = self._write(tmp_path)
        payload = (d / PAYLOAD_NAME).read_bytes()
        (d / PAYLOAD_NAME).write_bytes(payload[:-4])
        with pytest.raises(TruncatedPayloadError):
            read_dataset(d)

    def test_format_version_gate(self, tmp_path):
        d = self._write(tmp_path)
        manifest = json.loads((d / MANIFEST_NAME).read_text())
        manifest["format_version"] = 99
        (d / MANIFEST_NAME).write_text(json.dumps(manifest))
        with pytest.raises(FormatVersionError):
            read_dataset(d)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            read_dataset(tmp_path / "nope")
