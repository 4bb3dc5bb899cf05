"""Temporal-difference learning of MDR values with the grid interpolant as the
parametric approximator (gradient of ``U_theta(x)`` = interpolation weights)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from mdreach.grid import GridSpec, interp_weights, interpolate
from mdreach.models import SystemModel, euler_step


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    x_next: np.ndarray
    dt: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        xn = np.asarray(self.x_next, dtype=float).reshape(-1)
        if x.shape != xn.shape:
            raise ValueError("x and x_next must have the same dimension")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xn))):
            raise ValueError("transition states must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_next", xn)


@dataclass
class TDConfig:
    """``alpha`` is a constant in [0, 1] or ``"visits"`` for ``1 / (1 + visits)``
    counted at the sample's nearest node."""

    gamma: float
    alpha: Union[float, str] = "visits"
    passes: int = 1
    theta0: Optional[np.ndarray] = None
    shuffle: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if isinstance(self.alpha, str):
            if self.alpha != "visits":
                raise ValueError(f"unknown alpha schedule {self.alpha!r}")
        elif not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.passes < 0:
            raise ValueError("passes must be nonnegative")

    @classmethod
    def from_rate(cls, lam: float, dt: float, **kw) -> "TDConfig":
        return cls(gamma=math.exp(-lam * dt), **kw)


def _td_step(theta, grid: GridSpec, sample: Transition, target: float, alpha: float) -> np.ndarray:
    row = interp_weights(grid, sample.x)
    delta = target - row.dot(theta)
    out = np.array(theta, dtype=float)
    out[row.indices] += alpha * delta * row.weights
    return out


def _alpha(cfg: TDConfig, alpha: Optional[float]) -> float:
    if alpha is not None:
        return float(alpha)
    if isinstance(cfg.alpha, str):
        raise ValueError("a visit-count schedule needs an explicit alpha per update")
    return float(cfg.alpha)


def td_update_mdr(theta, sample: Transition, h_fn: Callable, cfg: TDConfig, grid: GridSpec,
                  alpha: Optional[float] = None) -> np.ndarray:
    """One MDR TD step: target ``min(h(x), gamma * U(x+))``."""
    target = min(float(h_fn(sample.x)), cfg.gamma * interpolate(grid, theta, sample.x_next))
    return _td_step(theta, grid, sample, target, _alpha(cfg, alpha))


def td_update_sdr(theta, sample: Transition, r_fn: Callable, cfg: TDConfig, grid: GridSpec,
                  alpha: Optional[float] = None) -> np.ndarray:
    """Classical TD(0) step: target ``r(x) + gamma * V(x+)`` with ``r`` dt-scaled."""
    target = float(r_fn(sample.x)) + cfg.gamma * interpolate(grid, theta, sample.x_next)
    return _td_step(theta, grid, sample, target, _alpha(cfg, alpha))


def rollout(model: SystemModel, policy: Callable, x0, dt: float, horizon_steps: int,
            grid: Optional[GridSpec] = None) -> list[Transition]:
    """Euler trajectory under ``policy``; states are clamped to ``grid``'s
    non-periodic bounds and wrapped on its periodic axes."""
    if model.two_player:
        raise ValueError("rollouts need a one-player model")
    if dt <= 0:
        raise ValueError("dt must be positive")

    def confine(x):
        if grid is None:
            return x
        x = x.copy()
        for j in range(grid.dim):
            lo, hi = grid.lower[j], grid.upper[j]
            if grid.periodic[j]:
                x[j] = lo + np.mod(x[j] - lo, hi - lo)
            else:
                x[j] = min(max(x[j], lo), hi)
        return x

    x = confine(np.asarray(x0, dtype=float))
    out = []
    for _ in range(horizon_steps):
        nxt = confine(euler_step(model, x, policy(x), dt=dt))
        out.append(Transition(x, nxt, dt))
        x = nxt
    return out


@dataclass
class LearningCurve:
    epochs: list
    gaps: list

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "gap_inf"])
            w.writerows(zip(self.epochs, self.gaps))
        return path


def nearest_node(grid: GridSpec, x) -> int:
    row = interp_weights(grid, x)
    return int(row.indices[np.argmax(row.weights)])


def td_train(
    samples: Iterable[Transition],
    grid: GridSpec,
    h_fn: Callable,
    cfg: TDConfig,
    theta_ref: Optional[np.ndarray] = None,
    update: Callable = td_update_mdr,
) -> tuple[np.ndarray, LearningCurve]:
    """Run ``cfg.passes`` epochs of TD updates over ``samples``.

    Without ``cfg.theta0`` training starts from ``h`` at the nodes. The curve
    holds the inf-norm gap to ``theta_ref`` after each epoch (epoch 0 is the
    start) when a reference is supplied.
    """
    data = list(samples)
    if not data:
        raise ValueError("TD training needs at least one transition")
    if len({s.dt for s in data}) > 1:
        raise ValueError("dt must be constant across a dataset")
    if cfg.theta0 is not None:
        theta = np.array(cfg.theta0, dtype=float)
    else:
        theta = np.array([float(h_fn(x)) for x in grid.nodes()])
    if theta.shape != (grid.n_nodes,):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({grid.n_nodes},)")
    rng = np.random.default_rng(cfg.seed)
    visits = np.zeros(grid.n_nodes, dtype=np.int64)
    nearest = [nearest_node(grid, s.x) for s in data]
    curve = LearningCurve([], [])

    def record(epoch):
        if theta_ref is not None:
            curve.epochs.append(epoch)
            curve.gaps.append(float(np.max(np.abs(theta - theta_ref))))

    record(0)
    for epoch in range(1, cfg.passes + 1):
        order = rng.permutation(len(data)) if cfg.shuffle else range(len(data))
        for k in order:
            if cfg.alpha == "visits":
                visits[nearest[k]] += 1
                alpha = 1.0 / (1.0 + visits[nearest[k]])
            else:
                alpha = float(cfg.alpha)
            theta = update(theta, data[k], h_fn, cfg, grid, alpha=alpha)
        record(epoch)
    return theta, curve


def node_samples(grid: GridSpec, model: SystemModel, dt: float, policy: Sequence[int]) -> list[Transition]:
    """One on-node transition per grid node under a per-node control index."""
    out = []
    for i, x in enumerate(grid.nodes()):
        out.append(Transition(x, euler_step(model, x, model.controls[policy[i]], dt=dt), dt))
    return out


def write_transitions_csv(path, samples: Sequence[Transition]) -> Path:
    path = Path(path)
    if not samples:
        raise ValueError("nothing to write")
    n = samples[0].x.shape[0]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(n)] + [f"x_next{j}" for j in range(n)] + ["dt"])
        for s in samples:
            w.writerow([repr(float(v)) for v in s.x] + [repr(float(v)) for v in s.x_next] + [repr(s.dt)])
    return path


def read_transitions_csv(path) -> list[Transition]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty dataset file")
    header, body = rows[0], [r for r in rows[1:] if r]
    n = (len(header) - 1) // 2
    if len(header) != 2 * n + 1 or n < 1:
        raise ValueError(f"{path}: header must be x..., x_next..., dt")
    out = []
    for line, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValueError(f"{path}:{line}: expected {len(header)} fields, got {len(r)}")
        try:
            vals = [float(v) for v in r]
        except ValueError:
            raise ValueError(f"{path}:{line}: non-numeric field") from None
        out.append(Transition(vals[:n], vals[n : 2 * n], vals[-1]))
    return out
