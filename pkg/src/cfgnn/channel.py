"""Channel simulation for the two tasks.

Power control: a cell-free layout with L multi-antenna APs and K single
antenna users dropped uniformly in a square service area.  Large-scale gain
follows a log-distance model with a fixed AP height offset, small-scale fading
is Rayleigh, optionally correlated at the AP array (local scattering).

Precoding: a single multi-antenna transmitter with a cluster-and-ray channel
(a few scatter clusters, several rays per cluster with Laplacian angular
offsets) on a half-wavelength uniform linear array.

All powers are in milliwatts and all distances in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, ShapeMismatchError
from .linalg import psd_sqrt

# Log-distance large-scale model: gain_dB = INTERCEPT + SLOPE * log10(d_3d).
PATH_LOSS_INTERCEPT_DB = -30.5
PATH_LOSS_SLOPE_DB = -36.7

CORRELATION_MODES = ("identity", "local-scattering")


@dataclass(frozen=True)
class ScenarioConfig:
    """Static parameters of a cell-free power-control deployment."""

    num_aps: int = 9
    num_ues: int = 8
    num_antennas: int = 8
    area_side_m: float = 1000.0
    max_power_mw: float = 1000.0
    noise_power_mw: float = 10.0 ** (-9.4)  # -94 dBm
    height_offset_m: float = 10.0
    correlation: str = "identity"
    angular_spread_deg: float = 15.0

    def validate(self) -> None:
        if self.num_aps < 1 or self.num_ues < 1 or self.num_antennas < 1:
            raise ConfigError(
                f"counts must be positive, got L={self.num_aps} K={self.num_ues} "
                f"N={self.num_antennas}"
            )
        if self.area_side_m <= 0:
            raise ConfigError(f"area side must be positive, got {self.area_side_m}")
        if self.max_power_mw <= 0 or self.noise_power_mw <= 0:
            raise ConfigError(
                f"powers must be positive, got P={self.max_power_mw} "
                f"noise={self.noise_power_mw}"
            )
        if self.height_offset_m < 0:
            raise ConfigError(f"height offset must be nonnegative, got {self.height_offset_m}")
        if self.correlation not in CORRELATION_MODES:
            raise ConfigError(f"unknown correlation mode {self.correlation!r}")
        if self.correlation == "local-scattering" and self.angular_spread_deg <= 0:
            raise ConfigError("angular spread must be positive for local scattering")

    @property
    def link_shape(self) -> tuple[int, int, int]:
        return (self.num_aps, self.num_ues, self.num_antennas)


@dataclass(frozen=True)
class SVChannelConfig:
    """Cluster-and-ray channel for the single-cell precoding task."""

    num_ues: int = 4
    num_antennas: int = 16
    num_clusters: int = 4
    rays_per_cluster: int = 5
    angular_spread_deg: float = 10.0
    array: str = "ula-half-wavelength"
    max_power_mw: float = 1000.0
    noise_power_mw: float = 100.0

    def validate(self) -> None:
        if self.num_ues < 1 or self.num_antennas < 1:
            raise ConfigError(
                f"counts must be positive, got K={self.num_ues} Nt={self.num_antennas}"
            )
        if self.num_clusters < 1 or self.rays_per_cluster < 1:
            raise ConfigError(
                f"cluster structure must be positive, got {self.num_clusters} clusters "
                f"x {self.rays_per_cluster} rays"
            )
        if self.angular_spread_deg < 0:
            raise ConfigError(f"angular spread must be nonnegative, got {self.angular_spread_deg}")
        if self.array != "ula-half-wavelength":
            raise ConfigError(f"unknown array geometry {self.array!r}")
        if self.max_power_mw <= 0 or self.noise_power_mw <= 0:
            raise ConfigError("powers must be positive")

    @property
    def link_shape(self) -> tuple[int, int]:
        return (self.num_ues, self.num_antennas)


@dataclass(frozen=True)
class Scenario:
    """One realisation of the deployment geometry."""

    ap_positions: np.ndarray  # (L, 2) meters
    ue_positions: np.ndarray  # (K, 2) meters
    large_scale: np.ndarray  # (L, K) linear power gains

    def validate(self) -> None:
        if self.ap_positions.ndim != 2 or self.ap_positions.shape[1] != 2:
            raise ShapeMismatchError(f"ap_positions must be (L, 2), got {self.ap_positions.shape}")
        if self.ue_positions.ndim != 2 or self.ue_positions.shape[1] != 2:
            raise ShapeMismatchError(f"ue_positions must be (K, 2), got {self.ue_positions.shape}")
        expected = (self.ap_positions.shape[0], self.ue_positions.shape[0])
        if self.large_scale.shape != expected:
            raise ShapeMismatchError(
                f"large_scale must be {expected}, got {self.large_scale.shape}"
            )
        if not np.all(np.isfinite(self.large_scale)) or np.any(self.large_scale <= 0):
            raise ConfigError("large-scale gains must be finite and positive")


@dataclass(frozen=True)
class ChannelTensor:
    """One small-scale realisation over a fixed scenario."""

    gains: np.ndarray  # (L, K, N) complex128
    correlation: str = "identity"


def path_gain_db(horizontal_m: np.ndarray | float, height_offset_m: float = 10.0):
    """Large-scale gain in dB at a horizontal distance, including the height offset."""
    d3 = np.sqrt(np.square(horizontal_m) + height_offset_m**2)
    return PATH_LOSS_INTERCEPT_DB + PATH_LOSS_SLOPE_DB * np.log10(d3)


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Drop APs and users uniformly and evaluate the large-scale gains."""
    config.validate()
    gen = rng.stream(seed, rng.SCENARIO_TAG)
    ap = rng.uniform(gen, (config.num_aps, 2), 0.0, config.area_side_m)
    ue = rng.uniform(gen, (config.num_ues, 2), 0.0, config.area_side_m)
    horizontal = np.linalg.norm(ap[:, None, :] - ue[None, :, :], axis=-1)
    beta_db = path_gain_db(horizontal, config.height_offset_m)
    scenario = Scenario(ap, ue, 10.0 ** (beta_db / 10.0))
    scenario.validate()
    return scenario


def correlation_roots(scenario: Scenario, config: ScenarioConfig) -> np.ndarray | None:
    """Square roots of the per-link antenna correlation matrices.

    Returns None for the identity mode.  Local scattering uses the gaussian
    closed form for a half-wavelength ULA: for antenna lag p and link bearing
    theta, R[p] = exp(j pi p sin(theta)) * exp(-(sigma * pi * p * cos(theta))^2 / 2).
    """
    if config.correlation == "identity":
        return None
    sigma = math.radians(config.angular_spread_deg)
    delta = scenario.ue_positions[None, :, :] - scenario.ap_positions[:, None, :]
    bearing = np.arctan2(delta[..., 1], delta[..., 0])  # (L, K)
    n = config.num_antennas
    lag = np.arange(n)[:, None] - np.arange(n)[None, :]  # (N, N)
    phase = 1j * math.pi * lag[None, None] * np.sin(bearing)[..., None, None]
    damp = -0.5 * (sigma * math.pi * lag[None, None] * np.cos(bearing)[..., None, None]) ** 2
    corr = np.exp(phase + damp)
    roots = np.empty_like(corr)
    for j in range(corr.shape[0]):
        for k in range(corr.shape[1]):
            roots[j, k] = psd_sqrt(corr[j, k], name=f"correlation[{j},{k}]")
    return roots


def sample_rayleigh(
    scenario: Scenario,
    config: ScenarioConfig,
    gen: np.random.Generator,
    corr_roots: np.ndarray | None = None,
) -> ChannelTensor:
    """Draw one (L, K, N) Rayleigh realisation over the scenario."""
    white = rng.complex_normal(gen, config.link_shape)
    if config.correlation == "identity":
        shaped = white
    else:
        if corr_roots is None:
            corr_roots = correlation_roots(scenario, config)
        shaped = np.einsum("jkab,jkb->jka", corr_roots, white)
    gains = np.sqrt(scenario.large_scale)[:, :, None] * shaped
    return ChannelTensor(gains=gains, correlation=config.correlation)


def steering_vectors(angles_rad: np.ndarray, num_antennas: int) -> np.ndarray:
    """Unit-norm half-wavelength ULA steering vectors, shape (..., Nt)."""
    n = np.arange(num_antennas)
    phases = 1j * math.pi * np.sin(np.asarray(angles_rad))[..., None] * n
    return np.exp(phases) / math.sqrt(num_antennas)


def sample_sv(config: SVChannelConfig, gen: np.random.Generator) -> np.ndarray:
    """Draw one (K, Nt) cluster-and-ray realisation.

    Cluster centers are uniform in (-pi/2, pi/2); ray offsets are Laplacian
    with standard deviation equal to the configured angular spread; complex
    ray gains are unit-variance gaussians.  The normalisation makes
    E||h_k||^2 = Nt.
    """
    config.validate()
    k, nt = config.num_ues, config.num_antennas
    c, r = config.num_clusters, config.rays_per_cluster
    spread = math.radians(config.angular_spread_deg)
    centers = rng.uniform(gen, (k, c), -math.pi / 2, math.pi / 2)
    offsets = rng.laplacian(gen, (k, c, r), spread / math.sqrt(2.0))
    alpha = rng.complex_normal(gen, (k, c, r))
    angles = centers[:, :, None] + offsets
    steer = steering_vectors(angles, nt)  # (K, C, R, Nt)
    h = np.einsum("kcr,kcrn->kn", alpha, steer)
    return h * math.sqrt(nt / (c * r))
