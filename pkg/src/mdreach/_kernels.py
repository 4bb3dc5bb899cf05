"""Compiled inner loops shared by interpolation and the backup operators.

A located point is described by its ``2**n`` cell-corner node indices and its
per-axis fractional position inside the cell. Values are reconstructed by
nested linear interpolation, reducing the last axis first. Every code path
(scalar queries, precomputed tables, on-the-fly sweeps) goes through
:func:`eval_points` so results agree bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MAX_CORNERS = 64  # supports grids up to 6 dimensions


@njit(cache=True, inline="always")
def _lerp(a, b, t):
    v = a + t * (b - a)
    # clamp so the result never leaves [min(a, b), max(a, b)] by rounding
    return max(min(a, b), min(v, max(a, b)))


@njit(cache=True, inline="always")
def _eval_one(values, idx_row, frac_row, buf):
    n = frac_row.shape[0]
    # unrolled 2D/3D cases; same operation order as the generic loop
    if n == 3:
        t = frac_row[2]
        p0 = _lerp(values[idx_row[0]], values[idx_row[1]], t)
        p1 = _lerp(values[idx_row[2]], values[idx_row[3]], t)
        p2 = _lerp(values[idx_row[4]], values[idx_row[5]], t)
        p3 = _lerp(values[idx_row[6]], values[idx_row[7]], t)
        t = frac_row[1]
        return _lerp(_lerp(p0, p1, t), _lerp(p2, p3, t), frac_row[0])
    if n == 2:
        t = frac_row[1]
        return _lerp(_lerp(values[idx_row[0]], values[idx_row[1]], t),
                     _lerp(values[idx_row[2]], values[idx_row[3]], t), frac_row[0])
    k = idx_row.shape[0]
    for c in range(k):
        buf[c] = values[idx_row[c]]
    m = k
    for j in range(n - 1, -1, -1):
        t = frac_row[j]
        m //= 2
        if t == 0.0:
            for c in range(m):
                buf[c] = buf[2 * c]
        else:
            for c in range(m):
                buf[c] = _lerp(buf[2 * c], buf[2 * c + 1], t)
    return buf[0]


@njit(cache=True)
def eval_points(values, idx, frac, out):
    """Interpolate ``values`` at every located point (rows of idx/frac)."""
    buf = np.empty(MAX_CORNERS)
    for r in range(idx.shape[0]):
        out[r] = _eval_one(values, idx[r], frac[r], buf)
    return out


@njit(cache=True)
def maxmin_backup(values, reward, idx, frac, gamma, out, policy):
    """out_i = min(reward_i, gamma * max_a min_b I[values](succ(i, a, b))).

    ``idx`` has shape (n_nodes, n_a, n_b, 2**n), node-major so a node's
    stencils are contiguous. ``policy`` receives the maximizing control index
    per node (lowest index wins ties) wherever the reward does not bind; pass
    an infinite reward to get it everywhere.

    Two exact cutoffs skip work: a control is abandoned once its running min
    cannot beat the best control, and a node stops once the reward already
    caps its result.
    """
    n_nodes, n_a, n_b = idx.shape[0], idx.shape[1], idx.shape[2]
    buf = np.empty(MAX_CORNERS)
    for i in range(n_nodes):
        best = -np.inf
        best_a = 0
        cap = reward[i]
        for a in range(n_a):
            worst = np.inf
            for b in range(n_b):
                v = _eval_one(values, idx[i, a, b], frac[i, a, b], buf)
                if v < worst:
                    worst = v
                    if worst <= best:
                        break
            if worst > best:
                best = worst
                best_a = a
                if gamma * best >= cap:
                    break
        policy[i] = best_a
        v = gamma * best
        out[i] = cap if cap < v else v
    return out


@njit(cache=True)
def policy_step(values, reward, idx, frac, gamma, policy, out):
    """out_i = min(reward_i, gamma * I[values](succ(i, policy_i))), one player."""
    buf = np.empty(MAX_CORNERS)
    for i in range(idx.shape[0]):
        a = policy[i]
        v = gamma * _eval_one(values, idx[i, a, 0], frac[i, a, 0], buf)
        out[i] = reward[i] if reward[i] < v else v
    return out


@njit(cache=True)
def sum_backup(values, reward, idx, frac, gamma, out, policy):
    """out_i = reward_i + gamma * max_a I[values](succ(i, a)), one player."""
    n_nodes, n_a = idx.shape[0], idx.shape[1]
    buf = np.empty(MAX_CORNERS)
    for i in range(n_nodes):
        best = -np.inf
        best_a = 0
        for a in range(n_a):
            v = _eval_one(values, idx[i, a, 0], frac[i, a, 0], buf)
            if v > best:
                best = v
                best_a = a
        policy[i] = best_a
        out[i] = reward[i] + gamma * best
    return out
