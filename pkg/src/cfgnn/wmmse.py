"""Weighted-MMSE solver for sum-SE maximisation under per-AP power caps.

The classic alternating scheme: receiver gains u and MSE weights w have
closed forms given the precoder; the precoder step is block-coordinate over
APs, where each AP solves a ridge-regularised least squares
(G_jj + mu I) v_j = r_j with mu >= 0 chosen so the AP meets its power budget.
Every step does not decrease the weighted-MSE potential, so the sum SE trace
is monotone up to solver tolerances.

For the single-cell precoding task pass a (K, Nt) channel; it is treated as
one AP with Nt antennas, which makes the per-AP cap the total power cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import BracketError, ConfigError, DomainError, ShapeMismatchError
from .linalg import hermitian_solve
from .metrics import Precoder, sum_se

INIT_MODES = ("conjugate", "random")

# Eigenvalues below this fraction of the largest are treated as null space.
_NULL_REL = 1e-13


@dataclass(frozen=True)
class WmmseOptions:
    max_iters: int = 100
    tolerance: float = 1e-6  # relative sum-SE change between iterations
    power_tolerance: float = 1e-12  # relative width of the final mu bracket
    init: str = "conjugate"
    restarts: int = 0  # extra random-init runs; the best final SE wins
    seed: int = 0
    max_bracket_doublings: int = 200

    def validate(self) -> None:
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tolerance <= 0 or self.power_tolerance <= 0:
            raise ConfigError("tolerances must be positive")
        if self.init not in INIT_MODES:
            raise ConfigError(f"unknown init mode {self.init!r}")
        if self.restarts < 0:
            raise ConfigError(f"restarts must be >= 0, got {self.restarts}")
        if self.max_bracket_doublings < 1:
            raise ConfigError("max_bracket_doublings must be >= 1")


def _scale_to_full_power(f: np.ndarray, p_max: float) -> np.ndarray:
    power = np.sum(np.abs(f) ** 2, axis=(1, 2))
    scale = np.where(power > 0, np.sqrt(p_max / np.maximum(power, 1e-300)), 0.0)
    return f * scale[:, None, None]


def _ap_subproblem(
    g_jj: np.ndarray, r_j: np.ndarray, p_max: float, options: WmmseOptions
) -> np.ndarray:
    """Minimise v^H G v - 2 Re(r^H v) subject to ||v||_F^2 <= p_max."""
    lam, q = np.linalg.eigh(g_jj)
    lam = np.clip(lam, 0.0, None)
    c = q.conj().T @ r_j
    row_power = np.sum(np.abs(c) ** 2, axis=1)
    top = lam[-1] if lam.size else 0.0
    null = lam <= _NULL_REL * max(top, 1e-300)

    def power_at(mu: float) -> float:
        return float(np.sum(row_power / (lam + mu) ** 2))

    # Unconstrained solution, valid when it already meets the budget.  Rows in
    # the null space with no forcing term contribute nothing (minimum norm).
    if np.all(row_power[null] <= 1e-30 * max(row_power.max(initial=0.0), 1e-300)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(null[:, None], 0.0, c / lam[:, None])
        p0 = float(np.sum(np.abs(ratio) ** 2))
        if p0 <= p_max * (1.0 + 1e-12):
            if not np.any(null):
                v = hermitian_solve((g_jj + g_jj.conj().T) / 2, r_j)
            else:
                v = q @ ratio
            return v

    # The cap binds: bisect on mu.  power(mu) <= sum(row_power) / mu^2 gives a
    # closed-form feasible upper end; the doubling loop is a guard only.
    hi = float(np.sqrt(np.sum(row_power) / p_max))
    doublings = 0
    while power_at(hi) > p_max:
        hi *= 2.0
        doublings += 1
        if doublings > options.max_bracket_doublings:
            raise BracketError(
                f"no feasible mu after {options.max_bracket_doublings} doublings"
            )
    lo = 0.0
    while hi - lo > options.power_tolerance * hi:
        mid = 0.5 * (lo + hi)
        if power_at(mid) > p_max:
            lo = mid
        else:
            hi = mid
    # The upper end is on the feasible side of the curve.
    mu = hi
    a = (g_jj + g_jj.conj().T) / 2 + mu * np.eye(g_jj.shape[0])
    v = hermitian_solve(a, r_j)
    actual = float(np.sum(np.abs(v) ** 2))
    if actual > p_max:
        v = v * np.sqrt(p_max / actual)
    return v


def _wmmse_run(
    h3: np.ndarray, p_max: float, noise: float, f0: np.ndarray, options: WmmseOptions
) -> tuple[np.ndarray, list[float]]:
    num_aps, num_ues, num_ant = h3.shape
    dim = num_aps * num_ant
    hg = h3.transpose(0, 2, 1).reshape(dim, num_ues)  # column k stacks AP blocks
    v = f0.transpose(0, 2, 1).reshape(dim, num_ues)

    trace = [sum_se(h3, f0, noise)]
    for _ in range(options.max_iters):
        t = hg.conj().T @ v  # t[k, i]
        denom = np.sum(np.abs(t) ** 2, axis=1) + noise
        u = np.diagonal(t) / denom
        mse = 1.0 - np.abs(np.diagonal(t)) ** 2 / denom
        mse = np.clip(mse, 1e-300, None)
        w = 1.0 / mse

        coeff = w * np.abs(u) ** 2
        g = (hg * coeff) @ hg.conj().T
        g = (g + g.conj().T) / 2
        b = hg * (w * u)

        for j in range(num_aps):
            sl = slice(j * num_ant, (j + 1) * num_ant)
            coupling = g[sl, :] @ v - g[sl, sl] @ v[sl]
            r_j = b[sl] - coupling
            v[sl] = _ap_subproblem(g[sl, sl], r_j, p_max, options)

        f = v.reshape(num_aps, num_ant, num_ues).transpose(0, 2, 1)
        trace.append(sum_se(h3, f, noise))
        if abs(trace[-1] - trace[-2]) <= options.tolerance * max(1.0, abs(trace[-2])):
            break
    return v.reshape(num_aps, num_ant, num_ues).transpose(0, 2, 1), trace


def wmmse_solve(
    channel: np.ndarray,
    max_power_mw: float,
    noise_power_mw: float,
    options: WmmseOptions | None = None,
) -> tuple[Precoder, list[float]]:
    """Run WMMSE and return the precoder and the sum-SE iteration trace.

    The trace starts with the SE of the initial point, then one entry per
    iteration.  With ``restarts > 0`` additional random initialisations are
    tried and the best final SE wins; the returned trace belongs to the
    winning run.
    """
    options = options or WmmseOptions()
    options.validate()
    if max_power_mw <= 0 or noise_power_mw <= 0:
        raise ConfigError(
            f"powers must be positive, got P={max_power_mw} noise={noise_power_mw}"
        )
    h = np.asarray(channel, dtype=np.complex128)
    squeeze = h.ndim == 2
    if squeeze:
        h = h[None, :, :]
    if h.ndim != 3:
        raise ShapeMismatchError(f"channel must be (L, K, N) or (K, N), got {channel.shape}")
    if not np.all(np.isfinite(h.view(np.float64))):
        raise DomainError("channel contains non-finite entries")

    starts: list[np.ndarray] = []
    if options.init == "conjugate":
        starts.append(_scale_to_full_power(h.copy(), max_power_mw))
    else:
        gen = rng.stream(options.seed, rng.WMMSE_TAG, 0)
        starts.append(_scale_to_full_power(rng.complex_normal(gen, h.shape), max_power_mw))
    for r in range(options.restarts):
        gen = rng.stream(options.seed, rng.WMMSE_TAG, r + 1)
        starts.append(_scale_to_full_power(rng.complex_normal(gen, h.shape), max_power_mw))

    best: tuple[np.ndarray, list[float]] | None = None
    for f0 in starts:
        f, trace = _wmmse_run(h, max_power_mw, noise_power_mw, f0, options)
        if best is None or trace[-1] > best[1][-1]:
            best = (f, trace)
    f, trace = best
    if squeeze:
        f = f[0]
    return Precoder(gains=f, max_power_mw=max_power_mw), trace
