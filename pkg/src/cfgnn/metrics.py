"""Spectral-efficiency metrics and distribution reporting.

Conventions: H and F are (L, K, N) complex arrays over a cell-free layout
(F[j, i] is AP j's beam toward user i); the single-cell precoding task uses
(K, Nt) matrices, treated as L=1.  The received cross-gain matrix is
t[k, i] = sum_j h_jk^H f_ji, the desired power |t[k, k]|^2 and the
interference sum_{i != k} |t[k, i]|^2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeMismatchError


@dataclass
class Precoder:
    """Beamforming coefficients plus the power budget they were built for."""

    gains: np.ndarray  # (L, K, N) complex
    max_power_mw: float


@dataclass
class SEReport:
    sinr: np.ndarray  # (K,)
    se: np.ndarray  # (K,) bits/s/Hz
    sum_se: float


def _as_three_axis(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None, :, :]
    if x.ndim == 3:
        return x
    raise ShapeMismatchError(f"{name} must be (L, K, N) or (K, N), got {x.shape}")


def cross_gains(channel: np.ndarray, precoder: np.ndarray) -> np.ndarray:
    """t[k, i] = sum over APs and antennas of h_jk^H f_ji, shape (K, K)."""
    h = _as_three_axis(channel, "channel")
    f = _as_three_axis(precoder, "precoder")
    if h.shape != f.shape:
        raise ShapeMismatchError(
            f"channel {channel.shape} and precoder {precoder.shape} do not match"
        )
    return np.einsum("jkn,jin->ki", h.conj(), f)


def sinr(channel: np.ndarray, precoder: np.ndarray, noise_power_mw: float) -> np.ndarray:
    if noise_power_mw <= 0:
        raise DomainError(f"noise power must be positive, got {noise_power_mw}")
    t = cross_gains(channel, precoder)
    power = np.abs(t) ** 2
    desired = np.diagonal(power).copy()
    interference = power.sum(axis=1) - desired
    return desired / (interference + noise_power_mw)


def se_report(channel: np.ndarray, precoder: np.ndarray, noise_power_mw: float) -> SEReport:
    values = sinr(channel, precoder, noise_power_mw)
    se = np.log2(1.0 + values)
    return SEReport(sinr=values, se=se, sum_se=float(se.sum()))


def sum_se(channel: np.ndarray, precoder: np.ndarray, noise_power_mw: float) -> float:
    return se_report(channel, precoder, noise_power_mw).sum_se


def batch_sum_se(channels: np.ndarray, precoders: np.ndarray, noise_power_mw: float) -> np.ndarray:
    """Vectorised per-sample sum SE for (B, L, K, N) or (B, K, N) stacks."""
    if noise_power_mw <= 0:
        raise DomainError(f"noise power must be positive, got {noise_power_mw}")
    h = np.asarray(channels)
    f = np.asarray(precoders)
    if h.ndim == 3:
        h = h[:, None]
        f = f[:, None]
    if h.shape != f.shape or h.ndim != 4:
        raise ShapeMismatchError(
            f"channels {channels.shape} and precoders {precoders.shape} do not match"
        )
    t = np.einsum("bjkn,bjin->bki", h.conj(), f)
    power = np.abs(t) ** 2
    desired = np.diagonal(power, axis1=1, axis2=2)
    interference = power.sum(axis=2) - desired
    se = np.log2(1.0 + desired / (interference + noise_power_mw))
    return se.sum(axis=1)


def per_ap_power(precoder: np.ndarray) -> np.ndarray:
    """Total transmit power per AP: sum over users and antennas of |f|^2."""
    f = _as_three_axis(precoder, "precoder")
    return np.sum(np.abs(f) ** 2, axis=(1, 2))


def power_violations(
    precoder: np.ndarray, max_power_mw: float, rtol: float = 1e-6
) -> np.ndarray:
    """Boolean per-AP flags for budget overruns beyond the tolerance."""
    return per_ap_power(precoder) > max_power_mw * (1.0 + rtol)


def empirical_cdf(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous empirical CDF: returns (sorted values, i/n levels)."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise DomainError("empirical_cdf of an empty sample")
    return v, np.arange(1, v.size + 1) / v.size


def summarize(values: np.ndarray) -> dict:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("summary of an empty sample")
    return {
        "count": int(v.size),
        "mean": float(np.mean(v)),
        "median": float(np.median(v)),
        "p05": float(np.percentile(v, 5)),
    }


def write_cdf_csv(path: str | Path, values: np.ndarray) -> None:
    xs, ps = empirical_cdf(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "cdf"])
        for x, p in zip(xs, ps):
            writer.writerow([repr(float(x)), repr(float(p))])


def write_summary_json(path: str | Path, values: np.ndarray) -> dict:
    summary = summarize(values)
    Path(path).write_text(json.dumps(summary, indent=2))
    return summary
