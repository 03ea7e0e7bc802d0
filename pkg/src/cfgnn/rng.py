"""Deterministic random streams.

All randomness in the package flows through ``stream(seed, *path)``: a
counter-based Philox generator keyed by the user seed and a tuple of integer
path components (module tag, sample index, ...).  Independent streams are
cheap to derive, order-independent, and reproduce bit-identically for a given
(seed, path) on any platform.

Normal variates are produced by an explicit Box-Muller transform on top of the
generator's uniform doubles rather than the generator's own ``normal`` so the
mapping from uniform bits to gaussians is pinned by this module.
"""

from __future__ import annotations

import math

import numpy as np

# Stream tags for the path component so call sites cannot collide by accident.
SCENARIO_TAG = 1
SAMPLE_TAG = 2
MODEL_INIT_TAG = 3
TRAIN_TAG = 4
WMMSE_TAG = 5

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of splitmix64; a well-mixed 64-bit permutation."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _mix_path(path: tuple[int, ...]) -> int:
    """Fold a tuple of integers into a single 64-bit key word."""
    acc = _splitmix64(len(path))
    for part in path:
        acc = _splitmix64(acc ^ (part & _MASK64))
    return acc


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for a (seed, path) pair.

    The Philox key is (seed, mix(path)), so distinct paths give statistically
    independent streams under the same user seed.
    """
    key = np.array([seed & _MASK64, _mix_path(path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniform(gen: np.random.Generator, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Uniform doubles in [low, high)."""
    return low + (high - low) * gen.random(shape, dtype=np.float64)


def normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via Box-Muller on the generator's uniform doubles.

    Uses log(1 - u) with u in [0, 1) so the argument never hits zero.
    """
    size = int(np.prod(shape)) if shape else 1
    pairs = (size + 1) // 2
    u1 = gen.random(pairs, dtype=np.float64)
    u2 = gen.random(pairs, dtype=np.float64)
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * math.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:size]
    return z.reshape(shape)


def complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Circularly symmetric unit-variance complex gaussians (E|z|^2 = 1)."""
    re = normal(gen, shape)
    im = normal(gen, shape)
    return (re + 1j * im) / math.sqrt(2.0)


def laplacian(gen: np.random.Generator, shape, scale: float) -> np.ndarray:
    """Zero-mean Laplacian variates with the given scale b (std = b*sqrt(2))."""
    u = gen.random(shape, dtype=np.float64) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
