"""Target sets described by clipped Euclidean signed distances.

``l(x) = clip(s(x), -L, L)`` is negative inside the target, and the shifted
reward ``h = l - L`` is nonpositive everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from mdreach.grid import GridSpec


@dataclass(frozen=True)
class BoxComplement:
    """Target is everything outside the axis-aligned box ``[lower, upper]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    clip_bound: Union[float, str] = "auto"

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or np.any(np.asarray(self.lower) >= np.asarray(self.upper)):
            raise ValueError("box needs lower < upper on every axis")


@dataclass(frozen=True)
class Cylinder:
    """Target is the disk of ``radius`` in the plane of ``axes``; other axes ignored."""

    radius: float
    axes: tuple[int, int] = (0, 1)
    clip_bound: Union[float, str] = "auto"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("cylinder radius must be positive")
        if self.axes[0] == self.axes[1]:
            raise ValueError("cylinder axes must differ")


@dataclass(frozen=True)
class NodeValues:
    """Surface function given directly by its values at the grid nodes.

    Used for toy chains where no geometric shape produces the wanted rewards.
    """

    values: tuple[float, ...] = field(default=())
    clip_bound: Union[float, str] = "auto"


TargetSpec = Union[BoxComplement, Cylinder, NodeValues]


def _box_sdf(points: np.ndarray, lower, upper) -> np.ndarray:
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    q = np.abs(points - (lo + hi) / 2) - (hi - lo) / 2
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def signed_distance(spec: TargetSpec, x) -> np.ndarray | float:
    """Unclipped signed distance to the target (negative inside it).

    Accepts a single state or an ``(m, n)`` batch.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if isinstance(spec, BoxComplement):
        out = -_box_sdf(pts[:, : len(spec.lower)], spec.lower, spec.upper)
    elif isinstance(spec, Cylinder):
        j1, j2 = spec.axes
        out = np.hypot(pts[:, j1], pts[:, j2]) - spec.radius
    else:
        raise TypeError(f"{type(spec).__name__} has no geometric signed distance")
    return float(out[0]) if single else out


def _unclipped(spec: TargetSpec, grid: GridSpec) -> np.ndarray:
    if isinstance(spec, NodeValues):
        v = np.asarray(spec.values, dtype=float)
        if v.shape != (grid.n_nodes,):
            raise ValueError(f"NodeValues has {v.size} entries, grid has {grid.n_nodes} nodes")
        return v
    return signed_distance(spec, grid.nodes())


def clip_bound(spec: TargetSpec, grid: GridSpec) -> float:
    """Resolve L: the configured bound, or the largest node magnitude for ``"auto"``."""
    if spec.clip_bound == "auto":
        L = float(np.abs(_unclipped(spec, grid)).max())
        if L <= 0:
            raise ValueError("auto clip bound is zero; every node lies on the target boundary")
        return L
    L = float(spec.clip_bound)
    if L <= 0:
        raise ValueError("clip bound must be positive")
    return L


def l_vector(spec: TargetSpec, grid: GridSpec) -> np.ndarray:
    L = clip_bound(spec, grid)
    return np.clip(_unclipped(spec, grid), -L, L)


def h_vector(spec: TargetSpec, grid: GridSpec) -> np.ndarray:
    return l_vector(spec, grid) - clip_bound(spec, grid)


def l_function(spec: TargetSpec, L: float):
    """Pointwise clipped surface function ``x -> l(x)`` for off-grid queries."""
    return lambda x: np.clip(signed_distance(spec, x), -L, L)
