"""Independent reference implementations used as test oracles.

Everything here is written directly from the mathematical definitions with
plain loops, deliberately sharing no code with the package, so agreement is
evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def max_rel_err(got: np.ndarray, want: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise relative error with an absolute floor on the scale."""
    scale = np.maximum(np.abs(want), floor)
    return float(np.max(np.abs(got - want) / scale))


def loop_sinr(H: np.ndarray, F: np.ndarray, noise: float) -> np.ndarray:
    """Per-user SINR by explicit loops.

    H and F are (L, K, N) complex; F[j, i] is AP j's beam toward user i.
    """
    L, K, N = H.shape
    t = np.zeros((K, K), dtype=complex)
    for k in range(K):
        for i in range(K):
            for j in range(L):
                for n in range(N):
                    t[k, i] += np.conj(H[j, k, n]) * F[j, i, n]
    sinr = np.zeros(K)
    for k in range(K):
        interference = 0.0
        for i in range(K):
            if i != k:
                interference += abs(t[k, i]) ** 2
        sinr[k] = abs(t[k, k]) ** 2 / (interference + noise)
    return sinr


def loop_sum_se(H: np.ndarray, F: np.ndarray, noise: float) -> float:
    return float(np.sum(np.log2(1.0 + loop_sinr(H, F, noise))))


def loop_gnn_layer(X, mask, gate, mats, activation: str):
    """Multi-path aggregation layer by explicit loops.

    X: (*link_shape, h_in) features, mask: bool (*link_shape), gate: float
    (*link_shape), mats: list of (h_in, h_out), one for the self path then one
    per link axis.  Each axis path averages gate*X over that axis divided by
    the count of retained (mask true) entries, zero where the count is zero,
    and broadcasts the result back.
    """
    link_shape = mask.shape
    ndim = len(link_shape)
    h_out = mats[0].shape[1]
    gated = gate[..., None] * X
    out = np.zeros(link_shape + (h_out,))
    for pos in np.ndindex(*link_shape):
        out[pos] += gated[pos] @ mats[0]
    for axis in range(ndim):
        for pos in np.ndindex(*link_shape):
            total = np.zeros(X.shape[-1])
            count = 0
            for r in range(link_shape[axis]):
                q = list(pos)
                q[axis] = r
                q = tuple(q)
                total += gated[q]
                if mask[q]:
                    count += 1
            mean = total / count if count > 0 else np.zeros_like(total)
            out[pos] += mean @ mats[axis + 1]
    if activation == "relu":
        out = np.maximum(out, 0.0)
    return out


def grid_two_user(h: np.ndarray, noise: float, p_max: float, step: float = 0.001):
    """Exhaustive power grid for one AP, one antenna, two users.

    With a single antenna the beam phase cancels in every magnitude, so the
    search space is the power simplex p1 + p2 <= p_max.
    Returns (best sum SE, best (p1, p2)).
    """
    g1 = abs(h[0]) ** 2
    g2 = abs(h[1]) ** 2
    levels = np.arange(0.0, p_max + step / 2, step * p_max)
    p1, p2 = np.meshgrid(levels, levels, indexing="ij")
    feasible = p1 + p2 <= p_max + 1e-12
    se = np.log2(1.0 + g1 * p1 / (g1 * p2 + noise)) + np.log2(
        1.0 + g2 * p2 / (g2 * p1 + noise)
    )
    se = np.where(feasible, se, -np.inf)
    flat = np.argmax(se)
    i, j = np.unravel_index(flat, se.shape)
    return float(se[i, j]), (float(levels[i]), float(levels[j]))
