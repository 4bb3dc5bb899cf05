"""Semi-Lagrangian backup operators on a grid.

All operators share one stencil: node ``i`` under inputs ``(a, b)`` moves to
``x_i + dt * f(x_i, u_a, d_b)`` and the value there is read off the
multilinear interpolant. The max over controls is taken outside the min over
disturbances, and ties go to the lowest input index.

Two execution modes give bit-identical results: a precomputed table of cell
corners and offsets (fast, memory hungry) and on-the-fly location of the
successor states every sweep.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from mdreach import _kernels
from mdreach.grid import GridSpec, WeightRow, corner_weights, locate, DROP_TOL
from mdreach.models import SystemModel

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2 * 1024**3


@dataclass
class PolicyPair:
    control: np.ndarray
    disturbance: Optional[np.ndarray] = None


class TransitionTable:
    """Successor stencils for every (node, control, disturbance) triple."""

    def __init__(self, grid: GridSpec, model: SystemModel, dt: float, lam: float, precompute: bool = True):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if lam < 0:
            raise ValueError("discount rate must be nonnegative")
        if model.dim != grid.dim:
            raise ValueError(f"model is {model.dim}-dimensional, grid is {grid.dim}-dimensional")
        self.grid = grid
        self.model = model
        self.dt = float(dt)
        self.lam = float(lam)
        self.gamma = math.exp(-self.lam * self.dt)
        self.n_a = model.n_controls
        self.n_b = max(1, model.n_disturbances)
        self._nodes = grid.nodes()
        self.idx = None
        self.frac = None
        if precompute:
            K, n, G = 2**grid.dim, grid.dim, grid.n_nodes
            # node-major so one node's stencils are contiguous during a sweep
            self.idx = np.empty((G, self.n_a, self.n_b, K), dtype=np.int32)
            self.frac = np.empty((G, self.n_a, self.n_b, n))
            for a in range(self.n_a):
                for b in range(self.n_b):
                    self.idx[:, a, b], self.frac[:, a, b] = locate(grid, self.successors(a, b))

    @property
    def precomputed(self) -> bool:
        return self.idx is not None

    @property
    def two_player(self) -> bool:
        return self.model.two_player

    def successors(self, a: int, b: int = 0) -> np.ndarray:
        d = self.model.disturbance(b)
        return self._nodes + self.dt * self.model(self._nodes, self.model.controls[a], d)

    def located(self, a: int, b: int = 0) -> tuple[np.ndarray, np.ndarray]:
        if self.precomputed:
            return self.idx[:, a, b], self.frac[:, a, b]
        return locate(self.grid, self.successors(a, b))

    def row(self, i: int, a: int, b: int = 0) -> WeightRow:
        idx, frac = self.located(a, b)
        w = corner_weights(frac[i : i + 1])[0]
        keep = w >= DROP_TOL
        indices, inverse = np.unique(idx[i][keep], return_inverse=True)
        weights = np.zeros(indices.shape[0])
        np.add.at(weights, inverse, w[keep])
        return WeightRow(indices.astype(np.int64), weights / weights.sum())

    def matrix(self, control: np.ndarray, disturbance: Optional[np.ndarray] = None) -> sparse.csr_matrix:
        """Stochastic matrix whose row ``i`` interpolates at node i's successor."""
        G = self.grid.n_nodes
        control = np.broadcast_to(np.asarray(control, dtype=np.int64), (G,))
        disturbance = np.zeros(G, dtype=np.int64) if disturbance is None else np.broadcast_to(disturbance, (G,))
        K = 2**self.grid.dim
        cols = np.empty((G, K), dtype=np.int64)
        vals = np.empty((G, K))
        for a in np.unique(control):
            for b in np.unique(disturbance):
                sel = np.flatnonzero((control == a) & (disturbance == b))
                if sel.size == 0:
                    continue
                idx, frac = self.located(int(a), int(b))
                cols[sel] = idx[sel]
                vals[sel] = corner_weights(frac[sel])
        rows = np.repeat(np.arange(G), K)
        return sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(G, G))

    def nbytes_estimate(self) -> int:
        return estimate_table_bytes(self.grid, self.model)


def estimate_table_bytes(grid: GridSpec, model: SystemModel) -> int:
    per_row = 4 * 2**grid.dim + 8 * grid.dim
    return grid.n_nodes * model.n_controls * max(1, model.n_disturbances) * per_row


def build_transition_table(
    grid: GridSpec,
    model: SystemModel,
    dt: float,
    lam: float,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    mode: str = "auto",
) -> TransitionTable:
    """Build successor stencils; falls back to on-the-fly mode over budget.

    ``mode`` is ``"auto"``, ``"table"`` or ``"on_the_fly"``.
    """
    if mode not in ("auto", "table", "on_the_fly"):
        raise ValueError(f"unknown table mode {mode!r}")
    precompute = mode == "table"
    if mode == "auto":
        need = estimate_table_bytes(grid, model)
        precompute = need <= memory_budget
        if not precompute:
            logger.warning("transition table needs %.1f MB > budget; using on-the-fly mode", need / 2**20)
    if lam == 0:
        warnings.warn("lambda = 0 gives gamma = 1: the backup is no longer a contraction", stacklevel=2)
    return TransitionTable(grid, model, dt, lam, precompute=precompute)


def _check(table: TransitionTable, *vectors) -> list[np.ndarray]:
    out = []
    for v in vectors:
        v = np.ascontiguousarray(v, dtype=float)
        if v.shape != (table.grid.n_nodes,):
            raise ValueError(f"vector has shape {v.shape}, expected ({table.grid.n_nodes},)")
        out.append(v)
    return out


def _maxmin(table: TransitionTable, values, reward, gamma: float, kind: str = "min"):
    """Shared sweep. ``kind='min'`` clamps by reward, ``'sum'`` adds it."""
    G = table.grid.n_nodes
    out = np.empty(G)
    policy = np.zeros(G, dtype=np.int64)
    if table.precomputed:
        if kind == "min":
            _kernels.maxmin_backup(values, reward, table.idx, table.frac, gamma, out, policy)
        else:
            _kernels.sum_backup(values, reward, table.idx, table.frac, gamma, out, policy)
        return out, policy
    best = np.full(G, -np.inf)
    buf = np.empty(G)
    n_b = table.n_b if kind == "min" else 1
    for a in range(table.n_a):
        worst = np.full(G, np.inf)
        for b in range(n_b):
            idx, frac = table.located(a, b)
            np.minimum(worst, _kernels.eval_points(values, idx, frac, buf), out=worst)
        better = worst > best
        best[better] = worst[better]
        policy[better] = a
    # gamma > 0 commutes with max/min, so it is applied once at the end
    best *= gamma
    if kind == "min":
        np.minimum(reward, best, out=out)
    else:
        np.add(reward, best, out=out)
    return out, policy


def mdr_backup(table: TransitionTable, h, U) -> np.ndarray:
    """``min(h, max_a min_b gamma * Phi_ab U)``."""
    h, U = _check(table, h, U)
    return _maxmin(table, U, h, table.gamma)[0]


def mr_backup(table: TransitionTable, l, V) -> np.ndarray:
    """Undiscounted ``min(l, max_a min_b Phi_ab V)``; ignores the table's gamma."""
    l, V = _check(table, l, V)
    return _maxmin(table, V, l, 1.0)[0]


def sdr_backup(table: TransitionTable, r, A) -> np.ndarray:
    """``r + max_a gamma * Phi_a A`` with ``r`` already scaled by ``dt``."""
    if table.two_player:
        raise ValueError("sum-of-discounted-rewards backup is one-player only")
    r, A = _check(table, r, A)
    return _maxmin(table, A, r, table.gamma, kind="sum")[0]


def _control_policy(table: TransitionTable, policy) -> np.ndarray:
    pol = policy.control if isinstance(policy, PolicyPair) else policy
    pol = np.ascontiguousarray(np.broadcast_to(np.asarray(pol, dtype=np.int64), (table.grid.n_nodes,)))
    if pol.size and (pol.min() < 0 or pol.max() >= table.n_a):
        raise IndexError(f"policy indices must lie in [0, {table.n_a})")
    return pol


def policy_backup(table: TransitionTable, h, policy, U) -> np.ndarray:
    """``min(h, gamma * Phi_pi U)`` for a fixed one-player policy."""
    if table.two_player:
        raise ValueError("policy backup is one-player only")
    h, U = _check(table, h, U)
    pol = _control_policy(table, policy)
    out = np.empty_like(U)
    if table.precomputed:
        return _kernels.policy_step(U, h, table.idx, table.frac, table.gamma, pol, out)
    for a in np.unique(pol):
        sel = pol == a
        idx, frac = table.located(int(a))
        v = table.gamma * _kernels.eval_points(U, idx[sel], frac[sel], np.empty(int(sel.sum())))
        out[sel] = np.minimum(h[sel], v)
    return out


def greedy_policy(table: TransitionTable, h, U) -> PolicyPair:
    """Per node, the lowest-index control maximizing ``gamma * Phi_a U``."""
    if table.two_player:
        raise ValueError("greedy policy improvement is one-player only")
    h, U = _check(table, h, U)
    # the reward only clamps the output, so +inf leaves the argmax untouched
    _, pol = _maxmin(table, U, np.full_like(U, np.inf), table.gamma)
    return PolicyPair(control=pol)


def maxmin(q) -> float:
    """``max_a min_b q[a, b]`` of a payoff matrix."""
    return float(np.asarray(q, dtype=float).min(axis=1).max())


class BackupOperator:
    """A backup bound to its reward vector, callable as ``B(A)``.

    ``kind`` is ``"mdr"``, ``"mr"`` or ``"sdr"``; ``reward`` is h, l or the
    dt-scaled running reward respectively.
    """

    def __init__(self, kind: str, table: TransitionTable, reward, clip_bound: Optional[float] = None):
        if kind not in ("mdr", "mr", "sdr"):
            raise ValueError(f"unknown backup kind {kind!r}")
        self.kind = kind
        self.table = table
        (self.reward,) = _check(table, reward)
        if kind == "mdr" and np.any(self.reward > 0):
            raise ValueError("MDR reward h must be nonpositive")
        self.clip_bound = clip_bound
        self.applications = 0

    @property
    def gamma(self) -> float:
        return 1.0 if self.kind == "mr" else self.table.gamma

    @property
    def grid(self) -> GridSpec:
        return self.table.grid

    def __call__(self, A) -> np.ndarray:
        self.applications += 1
        if self.kind == "mdr":
            return mdr_backup(self.table, self.reward, A)
        if self.kind == "mr":
            return mr_backup(self.table, self.reward, A)
        return sdr_backup(self.table, self.reward, A)

    def default_init(self) -> np.ndarray:
        if self.kind == "sdr":
            return np.zeros_like(self.reward)
        return self.reward.copy()

    def value_scale(self) -> float:
        """Bound on the spread of values the iteration can travel."""
        if self.kind != "sdr" and self.clip_bound is not None:
            return 2.0 * self.clip_bound
        r = float(np.abs(self.reward).max()) if self.reward.size else 0.0
        if self.kind == "sdr":
            return r / (1.0 - self.gamma) if self.gamma < 1 else r
        return r
