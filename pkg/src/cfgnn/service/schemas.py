"""Request and response models for the HTTP service.

The scenario models mirror the core config dataclasses field for field so the
API documents the full surface; ``to_config`` converts to the dataclass,
whose own ``validate`` remains the single source of truth for invariants.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..channel import ScenarioConfig, SVChannelConfig
from ..datasets import POWER_CONTROL, PRECODING
from ..errors import ConfigError

Kind = Literal["power-control", "precoding"]
Method = Literal["mdgnn", "sp-mdgnn", "a-mdgnn"]

NAME_PATTERN = r"^[A-Za-z0-9][A-Za-z0-9._-]*$"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PowerControlScenario(_Strict):
    num_aps: int = 9
    num_ues: int = 8
    num_antennas: int = 8
    area_side_m: float = 1000.0
    max_power_mw: float = 1000.0
    noise_power_mw: float = 10.0**-9.4
    height_offset_m: float = 10.0
    correlation: Literal["identity", "local-scattering"] = "identity"
    angular_spread_deg: float = 15.0

    def to_config(self) -> ScenarioConfig:
        return ScenarioConfig(**self.model_dump())


class PrecodingScenario(_Strict):
    num_ues: int = 4
    num_antennas: int = 16
    num_clusters: int = 4
    rays_per_cluster: int = 5
    angular_spread_deg: float = 10.0
    array: Literal["ula-half-wavelength"] = "ula-half-wavelength"
    max_power_mw: float = 1000.0
    noise_power_mw: float = 100.0

    def to_config(self) -> SVChannelConfig:
        return SVChannelConfig(**self.model_dump())


def scenario_config(kind: str, overrides: dict) -> ScenarioConfig | SVChannelConfig:
    cls = PowerControlScenario if kind == POWER_CONTROL else PrecodingScenario
    try:
        return cls(**overrides).to_config()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario overrides for {kind}: {exc}") from exc


class GenerateRequest(_Strict):
    name: str = Field(pattern=NAME_PATTERN, max_length=100)
    kind: Kind = POWER_CONTROL
    samples: int = Field(default=10000, gt=0)
    test_samples: int = Field(default=2000, ge=0)
    seed: int = 0
    workers: int = Field(default=1, ge=1)
    scenario: dict = Field(default_factory=dict)


class DatasetSummary(_Strict):
    name: str
    kind: str
    samples: int
    seed: int
    sample_shape: list[int]
    size_bytes: int


class GenerateResponse(_Strict):
    train: DatasetSummary
    test: DatasetSummary | None = None


class ModelSettings(_Strict):
    hidden: int = Field(default=256, ge=1)
    num_layers: int = Field(default=5, ge=2)
    score_dim: int = Field(default=16, ge=1)


class TrainingSettings(_Strict):
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = Field(default=20, ge=1)
    eval_batch_size: int = Field(default=256, ge=1)


class JointSettings(_Strict):
    train_dataset: str = Field(pattern=NAME_PATTERN)
    test_dataset: str = Field(pattern=NAME_PATTERN)
    tau: float = Field(default=0.0, ge=0.0, lt=1.0)
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)


class TrainRequest(_Strict):
    train_dataset: str = Field(pattern=NAME_PATTERN)
    test_dataset: str = Field(pattern=NAME_PATTERN)
    checkpoint: str = Field(pattern=NAME_PATTERN, max_length=100)
    method: Method = "mdgnn"
    tau: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = 0
    model: ModelSettings = Field(default_factory=ModelSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    joint: JointSettings | None = None  # adds a precoding branch when present


class SweepRequest(_Strict):
    train_dataset: str = Field(pattern=NAME_PATTERN)
    test_dataset: str = Field(pattern=NAME_PATTERN)
    taus: list[float] = Field(default_factory=lambda: [round(0.50 + 0.02 * i, 2) for i in range(11)])
    seed: int = 0
    model: ModelSettings = Field(default_factory=ModelSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)


class WmmseSettings(_Strict):
    max_iters: int = Field(default=100, ge=1)
    tolerance: float = 1e-6
    init: Literal["conjugate", "random"] = "conjugate"
    restarts: int = Field(default=0, ge=0)
    seed: int = 0


class BenchRequest(_Strict):
    datasets: list[str] = Field(min_length=1)
    checkpoints: list[str] = Field(default_factory=list)
    include_wmmse: bool = True
    sample_count: int | None = Field(default=None, gt=0)
    batch_size: int = Field(default=64, ge=1)
    wmmse: WmmseSettings = Field(default_factory=WmmseSettings)


class EvalRequest(_Strict):
    checkpoint: str = Field(pattern=NAME_PATTERN)
    dataset: str = Field(pattern=NAME_PATTERN)
    sample_count: int | None = Field(default=None, gt=0)
    batch_size: int = Field(default=64, ge=1)


class WmmseRequest(_Strict):
    dataset: str = Field(pattern=NAME_PATTERN)
    sample_count: int | None = Field(default=None, gt=0)
    options: WmmseSettings = Field(default_factory=WmmseSettings)


class JobSubmitted(_Strict):
    job_id: str
    kind: str
    state: str


class JobStatus(_Strict):
    job_id: str
    kind: str
    state: Literal["queued", "running", "done", "failed"]
    request: dict
    result: dict | None = None
    error: dict | None = None


class HealthResponse(_Strict):
    status: str
    version: str


KIND_VALUES = (POWER_CONTROL, PRECODING)
