"""System dynamics ``xdot = f(x, u, d)`` with finite input sets.

Flows are vectorized over states: ``flow(x, u, d)`` takes ``x`` of shape
``(..., n)`` and returns an array of the same shape. ``d`` is ``None`` for
one-player models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from mdreach.grid import GridSpec

Flow = Callable[[np.ndarray, np.ndarray, Optional[np.ndarray]], np.ndarray]


@dataclass(frozen=True)
class SystemModel:
    name: str
    dim: int
    flow: Flow
    controls: np.ndarray
    disturbances: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        controls = np.asarray(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls[:, None]
        if controls.shape[0] == 0:
            raise ValueError("control set must not be empty")
        object.__setattr__(self, "controls", controls)
        if self.disturbances is not None:
            dist = np.asarray(self.disturbances, dtype=float)
            if dist.ndim == 1:
                dist = dist[:, None]
            object.__setattr__(self, "disturbances", dist if dist.shape[0] else None)

    @property
    def two_player(self) -> bool:
        return self.disturbances is not None

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    @property
    def n_disturbances(self) -> int:
        return 0 if self.disturbances is None else self.disturbances.shape[0]

    def disturbance(self, b: int) -> Optional[np.ndarray]:
        return None if self.disturbances is None else self.disturbances[b]

    def __call__(self, x, u, d=None) -> np.ndarray:
        return self.flow(np.asarray(x, dtype=float), np.atleast_1d(np.asarray(u, dtype=float)),
                         None if d is None else np.atleast_1d(np.asarray(d, dtype=float)))


def discretize_inputs(interval: tuple[float, float], count: int) -> np.ndarray:
    lo, hi = interval
    if count < 1:
        raise ValueError("need at least one input sample")
    if lo > hi:
        raise ValueError("interval lower bound exceeds upper bound")
    if count == 1:
        return np.array([(lo + hi) / 2])
    return np.linspace(lo, hi, count)


def flow_double_integrator(x, u, d=None):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)[0]
    return np.stack([x[..., 1], np.full(x.shape[:-1], u)], axis=-1)


def flow_pursuit_evasion(x, u, d, v_u: float = 5.0, v_d: float = 5.0):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)[0]
    d = np.asarray(d, dtype=float).reshape(-1)[0]
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        [
            -v_u + v_d * np.cos(x3) + u * x2,
            v_d * np.sin(x3) - u * x1,
            np.full(x.shape[:-1], d - u),
        ],
        axis=-1,
    )


def double_integrator(u_max: float = 2.0, n_controls: int = 2) -> SystemModel:
    return SystemModel(
        name="double_integrator",
        dim=2,
        flow=flow_double_integrator,
        controls=discretize_inputs((-u_max, u_max), n_controls),
        params={"u_max": u_max, "n_controls": n_controls},
    )


def pursuit_evasion(
    v_u: float = 5.0,
    v_d: float = 5.0,
    u_max: float = 1.0,
    d_max: float = 1.0,
    n_controls: int = 11,
    n_disturbances: int = 11,
) -> SystemModel:
    def flow(x, u, d):
        return flow_pursuit_evasion(x, u, d, v_u, v_d)

    return SystemModel(
        name="pursuit_evasion",
        dim=3,
        flow=flow,
        controls=discretize_inputs((-u_max, u_max), n_controls),
        disturbances=discretize_inputs((-d_max, d_max), n_disturbances),
        params={"v_u": v_u, "v_d": v_d, "u_max": u_max, "d_max": d_max,
                "n_controls": n_controls, "n_disturbances": n_disturbances},
    )


def velocity_chain(velocities=(0.0, 1.0)) -> SystemModel:
    """1D model ``xdot = u``; on a unit-spaced grid with ``dt = 1`` each control
    shifts the state by ``u`` nodes (the toy chain used in examples and tests)."""

    def flow(x, u, d=None):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape, np.asarray(u).reshape(-1)[0])

    return SystemModel(name="chain", dim=1, flow=flow, controls=np.asarray(velocities, dtype=float),
                       params={"velocities": list(velocities)})


MODELS = {
    "double_integrator": double_integrator,
    "pursuit_evasion": pursuit_evasion,
    "chain": velocity_chain,
}


def make_model(name: str, **params) -> SystemModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    return factory(**params)


def with_params(model: SystemModel, **params) -> SystemModel:
    """Rebuild a registered model with some parameters changed."""
    base = {k: v for k, v in model.params.items()}
    base.update(params)
    return make_model(model.name, **base)


def euler_step(model: SystemModel, x, u, d=None, dt: float = 0.1) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    return x + dt * model(x, u, d)


def max_speed(grid: GridSpec, model: SystemModel) -> float:
    """Largest ``||f||_inf`` over grid nodes and all discrete input pairs."""
    nodes = grid.nodes()
    fmax = 0.0
    dists = [None] if not model.two_player else list(model.disturbances)
    for u in model.controls:
        for d in dists:
            fmax = max(fmax, float(np.abs(model(nodes, u, d)).max()))
    return fmax


def default_dt(grid: GridSpec, model: SystemModel) -> float:
    """CFL-like step: the foot point moves at most one cell per step."""
    fmax = max_speed(grid, model)
    h = float(grid.spacing.min())
    return h / fmax if fmax > 0 else h

