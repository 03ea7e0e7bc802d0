"""Channel dataset container and on-disk format.

A dataset is a directory with two entries:

* ``manifest.json``: format version, task kind, generation config echo, seed,
  sample count and shape, and a CRC-32 of the payload,
* ``samples.bin``: the channel tensors as little-endian float32 (re, im)
  pairs, sample-major, then row-major over the link axes.

That wire layout is exactly numpy's ``<c8`` (complex64), which is also the
in-memory canonical form, so a write/read round-trip is bit-identical.
Training and evaluation cast to complex128 on use.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rng
from .channel import (
    Scenario,
    ScenarioConfig,
    SVChannelConfig,
    correlation_roots,
    generate_scenario,
    sample_rayleigh,
    sample_sv,
)
from .errors import (
    ChecksumError,
    ConfigError,
    FormatVersionError,
    MissingArtifactError,
    TruncatedPayloadError,
)

FORMAT_VERSION = 1
POWER_CONTROL = "power-control"
PRECODING = "precoding"

MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "samples.bin"


@dataclass
class Dataset:
    kind: str
    seed: int
    config: ScenarioConfig | SVChannelConfig
    scenario: Scenario | None
    samples: np.ndarray  # complex64, (S, L, K, N) or (S, K, Nt)

    @property
    def sample_count(self) -> int:
        return int(self.samples.shape[0])

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.samples.shape[1:])

    def gains_f64(self) -> np.ndarray:
        return self.samples.astype(np.complex128)

    def subset(self, count: int) -> "Dataset":
        if not 0 < count <= self.sample_count:
            raise ConfigError(
                f"subset of {count} samples out of range for {self.sample_count}"
            )
        return Dataset(self.kind, self.seed, self.config, self.scenario, self.samples[:count])

    def split(self, first_count: int) -> tuple["Dataset", "Dataset"]:
        """Split into leading and trailing parts that share one generation run.

        Both halves keep the scenario, so a power-control train/test pair sees
        the same geometry with independent fading.
        """
        if not 0 < first_count < self.sample_count:
            raise ConfigError(
                f"cannot split {self.sample_count} samples at {first_count}"
            )
        head = Dataset(self.kind, self.seed, self.config, self.scenario,
                       self.samples[:first_count])
        tail = Dataset(self.kind, self.seed, self.config, self.scenario,
                       self.samples[first_count:])
        return head, tail


def _pc_chunk(args) -> np.ndarray:
    scenario, config, seed, indices = args
    roots = correlation_roots(scenario, config)
    out = np.empty((len(indices),) + config.link_shape, dtype=np.complex64)
    for row, i in enumerate(indices):
        gen = rng.stream(seed, rng.SAMPLE_TAG, i)
        out[row] = sample_rayleigh(scenario, config, gen, roots).gains.astype(np.complex64)
    return out


def _sv_chunk(args) -> np.ndarray:
    config, seed, indices = args
    out = np.empty((len(indices),) + config.link_shape, dtype=np.complex64)
    for row, i in enumerate(indices):
        gen = rng.stream(seed, rng.SAMPLE_TAG, i)
        out[row] = sample_sv(config, gen).astype(np.complex64)
    return out


def _run_chunks(fn, static, sample_count: int, workers: int) -> np.ndarray:
    indices = list(range(sample_count))
    if workers <= 1 or sample_count < 4 * workers:
        return fn(static + (indices,))
    # Per-sample streams make the split order-independent; chunks reassemble
    # by index so the result is identical to the single-worker run.
    chunks = np.array_split(indices, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, [static + (list(c),) for c in chunks]))
    return np.concatenate(parts, axis=0)


def generate_power_control(
    config: ScenarioConfig, sample_count: int, seed: int, workers: int = 1
) -> Dataset:
    """Fix one geometry, then draw independent fading realisations."""
    config.validate()
    if sample_count < 0:
        raise ConfigError(f"sample count must be nonnegative, got {sample_count}")
    scenario = generate_scenario(config, seed)
    samples = (
        _run_chunks(_pc_chunk, (scenario, config, seed), sample_count, workers)
        if sample_count
        else np.zeros((0,) + config.link_shape, dtype=np.complex64)
    )
    return Dataset(POWER_CONTROL, seed, config, scenario, samples)


def generate_precoding(
    config: SVChannelConfig, sample_count: int, seed: int, workers: int = 1
) -> Dataset:
    """Draw independent cluster-and-ray realisations (geometry per sample)."""
    config.validate()
    if sample_count < 0:
        raise ConfigError(f"sample count must be nonnegative, got {sample_count}")
    samples = (
        _run_chunks(_sv_chunk, (config, seed), sample_count, workers)
        if sample_count
        else np.zeros((0,) + config.link_shape, dtype=np.complex64)
    )
    return Dataset(PRECODING, seed, config, None, samples)


def _scenario_to_json(scenario: Scenario | None):
    if scenario is None:
        return None
    return {
        "ap_positions": scenario.ap_positions.tolist(),
        "ue_positions": scenario.ue_positions.tolist(),
        "large_scale": scenario.large_scale.tolist(),
    }


def _scenario_from_json(obj) -> Scenario | None:
    if obj is None:
        return None
    return Scenario(
        ap_positions=np.asarray(obj["ap_positions"], dtype=np.float64),
        ue_positions=np.asarray(obj["ue_positions"], dtype=np.float64),
        large_scale=np.asarray(obj["large_scale"], dtype=np.float64),
    )


def write_dataset(dataset: Dataset, directory: str | Path) -> Path:
    """Write manifest.json and samples.bin under the given directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(dataset.samples.astype("<c8", copy=False)).tobytes()
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": dataset.kind,
        "seed": dataset.seed,
        "sample_count": dataset.sample_count,
        "sample_shape": list(dataset.sample_shape),
        "dtype": "complex64-le",
        "checksum_crc32": zlib.crc32(payload),
        "config": asdict(dataset.config),
        "scenario": _scenario_to_json(dataset.scenario),
    }
    (directory / PAYLOAD_NAME).write_bytes(payload)
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return directory


def read_dataset(directory: str | Path) -> Dataset:
    """Load and verify a dataset directory."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    payload_path = directory / PAYLOAD_NAME
    if not manifest_path.is_file() or not payload_path.is_file():
        raise MissingArtifactError(f"no dataset at {directory}")
    manifest = json.loads(manifest_path.read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported dataset format version {version!r}, expected {FORMAT_VERSION}"
        )
    kind = manifest["kind"]
    if kind not in (POWER_CONTROL, PRECODING):
        raise FormatVersionError(f"unknown dataset kind {kind!r}")
    shape = tuple(int(x) for x in manifest["sample_shape"])
    count = int(manifest["sample_count"])
    payload = payload_path.read_bytes()
    expected_bytes = count * int(np.prod(shape)) * 8
    if len(payload) != expected_bytes:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, manifest implies {expected_bytes}"
        )
    checksum = zlib.crc32(payload)
    if checksum != manifest["checksum_crc32"]:
        raise ChecksumError(
            f"payload checksum {checksum} does not match manifest "
            f"{manifest['checksum_crc32']}"
        )
    samples = np.frombuffer(payload, dtype="<c8").reshape((count,) + shape).copy()
    config_cls = ScenarioConfig if kind == POWER_CONTROL else SVChannelConfig
    config = config_cls(**manifest["config"])
    config.validate()
    return Dataset(
        kind=kind,
        seed=int(manifest["seed"]),
        config=config,
        scenario=_scenario_from_json(manifest.get("scenario")),
        samples=samples,
    )
